import numpy as np
import pytest

from echonav import tensor as tc
from echonav.encoders import EgoImage, LinearParams, ObsConfig, Spectrogram, encode_audio, encode_visual, patchify
from echonav.errors import ConfigError, InputError, ShapeError
from echonav.tensor import Tensor


@pytest.fixture
def obs():
    return ObsConfig(F=3, Tw=4, Hv=4, Wv=4, patch=2)


class TestValidation:
    def test_indivisible_patch_grid(self):
        with pytest.raises(ConfigError):
            ObsConfig(Hv=10, Wv=16, patch=4)

    def test_spectrogram_rejects_negative_and_mono(self):
        with pytest.raises(InputError):
            Spectrogram(-np.ones((2, 3, 4)))
        with pytest.raises(InputError):
            Spectrogram(np.ones((1, 3, 4)))

    def test_image_range(self):
        with pytest.raises(InputError):
            EgoImage("depth", np.full((4, 4, 1), 1.5))
        with pytest.raises(InputError):
            EgoImage("rgb", np.zeros((4, 4, 1)))

    def test_region_count(self):
        cfg = ObsConfig()
        assert cfg.n_regions == 16 and cfg.patch_dim == 16


class TestAudio:
    def test_zero_input_zero_output(self, obs, rng):
        p = LinearParams.init(rng, 6, 5)
        out = encode_audio(Spectrogram(np.zeros((2, 3, 4))), p, obs)
        assert out.shape == (1, 4, 5)
        np.testing.assert_array_equal(out.data, 0.0)

    def test_identical_frames_identical_rows(self, obs, rng):
        p = LinearParams.init(rng, 6, 5)
        s = rng.uniform(0, 2, size=(2, 3, 4))
        s[:, :, 2] = s[:, :, 0]
        out = encode_audio(s, p, obs).data[0]
        np.testing.assert_array_equal(out[2], out[0])

    def test_hand_projection(self, rng):
        cfg = ObsConfig(F=2, Tw=1, Hv=4, Wv=4, patch=2)
        p = LinearParams.init(rng, 4, 3)
        s = np.array([[[1.0], [2.0]], [[3.0], [4.0]]])
        frame = np.log1p(np.array([1.0, 2.0, 3.0, 4.0]))  # left bins, then right
        expected = frame @ p.w.data + p.b.data
        np.testing.assert_allclose(encode_audio(s, p, cfg).data[0, 0], expected, atol=1e-15)

    def test_frame_locality(self, obs, rng):
        p = LinearParams.init(rng, 6, 5)
        s = rng.uniform(0, 1, size=(2, 3, 4))
        a = encode_audio(s, p, obs).data
        s[:, :, 1] += 0.5
        b = encode_audio(s, p, obs).data
        changed = np.any(a != b, axis=-1)[0]
        assert changed.tolist() == [False, True, False, False]

    def test_bin_mismatch(self, obs, rng):
        with pytest.raises(ShapeError):
            encode_audio(np.zeros((2, 5, 4)), LinearParams.init(rng, 6, 5), obs)


class TestVisual:
    def test_uniform_image_identical_regions(self, obs, rng):
        p = LinearParams.init(rng, 4, 5)
        out = encode_visual(EgoImage("depth", np.full((4, 4, 1), 0.3)), p, obs).data[0]
        assert out.shape == (4, 5)
        np.testing.assert_array_equal(out, np.broadcast_to(out[0], out.shape))

    def test_top_left_patch_hand_computed(self, obs, rng):
        p = LinearParams.init(rng, 4, 5)
        img = rng.uniform(size=(4, 4, 1))
        patch = np.array([img[0, 0, 0], img[0, 1, 0], img[1, 0, 0], img[1, 1, 0]])
        np.testing.assert_allclose(encode_visual(img, p, obs).data[0, 0], patch @ p.w.data + p.b.data, atol=1e-15)

    def test_row_major_region_order(self):
        img = np.arange(16.0).reshape(1, 4, 4, 1)
        regions = patchify(Tensor(img), 2).data[0]
        np.testing.assert_array_equal(regions[:, 0], [0.0, 2.0, 8.0, 10.0])

    def test_swapping_patches_swaps_rows(self, obs, rng):
        p = LinearParams.init(rng, 4, 5)
        img = rng.uniform(size=(4, 4, 1))
        swapped = img.copy()
        swapped[0:2, 0:2], swapped[2:4, 2:4] = img[2:4, 2:4], img[0:2, 0:2]
        a, b = encode_visual(img, p, obs).data[0], encode_visual(swapped, p, obs).data[0]
        np.testing.assert_array_equal(b[[3, 1, 2, 0]], a)

    def test_patch_locality(self, obs, rng):
        p = LinearParams.init(rng, 4, 5)
        img = rng.uniform(size=(4, 4, 1))
        a = encode_visual(img, p, obs).data[0]
        img[1, 3, 0] = 1 - img[1, 3, 0]
        b = encode_visual(img, p, obs).data[0]
        assert np.any(a != b, axis=-1).tolist() == [False, True, False, False]

    def test_rgb_channels(self, rng):
        cfg = ObsConfig(Hv=4, Wv=4, patch=2, mode="rgb")
        p = LinearParams.init(rng, cfg.patch_dim, 3)
        assert encode_visual(rng.uniform(size=(2, 4, 4, 3)), p, cfg).shape == (2, 4, 3)


def test_encoder_gradients(obs, rng):
    pa, pv = LinearParams.init(rng, 6, 5), LinearParams.init(rng, 4, 5)
    spec = Tensor(rng.uniform(0, 2, size=(2, 2, 3, 4)), requires_grad=True)
    img = Tensor(rng.uniform(size=(2, 4, 4, 1)), requires_grad=True)
    wa, wv = rng.normal(size=(2, 4, 5)), rng.normal(size=(2, 4, 5))
    loss = lambda: (encode_audio(spec, pa, obs) * wa).sum() + (encode_visual(img, pv, obs) * wv).sum()
    assert tc.grad_check_all(loss, [spec, img, pa.w, pa.b, pv.w, pv.b]) < 1e-5
