"""
Image decoding / normalization and the width-scaled VGG16 branch.
"""
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from config.schema import train_config_for
from src.image.preprocessing import (
    IMAGENET_MEAN,
    IMAGENET_STD,
    IMAGE_SIZE,
    ImageBatchLoader,
    ImageCache,
    load_raster,
    preprocess_image,
)
from src.image.vgg16 import HEAD_PREFIX, layer_shapes, pooling_schedule, vgg16_forward, vgg16_init
from src.models.dataset import PairDataset
from src.models.fusion import build_model, predict
from src.models.trainer import train
from src.utils.errors import ConfigurationError, IncompatibilityError, InputError


class TestPreprocessImage:
    def test_zero_image_is_negative_mean_over_std(self):
        out = preprocess_image(np.zeros((10, 14, 3), dtype=np.uint8))
        assert out.shape == (3, IMAGE_SIZE, IMAGE_SIZE)
        for c in range(3):
            assert_allclose(out[c], -IMAGENET_MEAN[c] / IMAGENET_STD[c], rtol=1e-5)

    def test_white_scales_to_one_before_normalization(self):
        out = preprocess_image(np.full((4, 4, 3), 255, dtype=np.uint8), size=8)
        assert_allclose(out * IMAGENET_STD[:, None, None] + IMAGENET_MEAN[:, None, None], 1.0, rtol=1e-5)

    @pytest.mark.parametrize("shape", [(37, 53, 3), (224, 224, 3), (300, 120, 3)])
    def test_output_shape_independent_of_input(self, shape):
        pixels = np.random.default_rng(1).integers(0, 256, size=shape, dtype=np.uint8)
        out = preprocess_image(pixels)
        assert out.shape == (3, 224, 224) and out.dtype == np.float32
        assert np.all(np.isfinite(out))

    @pytest.mark.parametrize("pixels", [np.zeros((5, 5)), np.zeros((5, 5, 4)), np.zeros((0, 5, 3))])
    def test_rejects_non_rgb_or_empty(self, pixels):
        with pytest.raises(InputError):
            preprocess_image(pixels)


class TestDecoding:
    @pytest.mark.parametrize("mode", ['RGB', 'L', 'RGBA', 'P'])
    def test_any_mode_decodes_to_rgb(self, write_image, mode):
        path = write_image(f"img_{mode}.png", (120, 40, 200), size=(9, 6), mode=mode)
        pixels = load_raster(path)
        assert pixels.shape == (6, 9, 3) and pixels.dtype == np.uint8

    def test_missing_file(self, tmp_path):
        with pytest.raises(InputError, match="not found"):
            load_raster(tmp_path / "nope.jpg")

    def test_undecodable_file(self, tmp_path):
        path = tmp_path / "broken.jpg"
        path.write_bytes(b"definitely not an image")
        with pytest.raises(InputError, match="cannot decode"):
            load_raster(path)

    def test_batch_loader_keeps_order_and_resolves_root(self, tmp_path, write_image):
        write_image("images/red.png", (250, 0, 0))
        write_image("images/blue.png", (0, 0, 250))
        loader = ImageBatchLoader(size=8, max_workers=3, root=tmp_path)
        batch = loader.load(["images/red.png", "images/blue.png", "images/red.png"])
        assert batch.shape == (3, 3, 8, 8)
        assert batch[0, 0].mean() > batch[1, 0].mean()
        assert_array_equal(batch[0], batch[2])

    def test_cache_evicts_least_recently_used(self):
        cache = ImageCache(max_size=2)
        cache.put("a", 1)
        cache.put("b", 2)
        cache.get("a")
        cache.put("c", 3)
        assert cache.get("b") is None
        assert cache.get("a") == 1 and cache.get("c") == 3

    def test_cache_survives_concurrent_eviction(self):
        cache = ImageCache(max_size=8)
        keys = [f"img{i}" for i in range(16)]

        def churn(offset):
            for round_ in range(300):
                key = keys[(offset + round_) % len(keys)]
                if cache.get(key) is None:
                    cache.put(key, key)

        with ThreadPoolExecutor(max_workers=4) as executor:
            list(executor.map(churn, range(4)))
        assert len(cache) == 8
        for key in keys:
            assert cache.get(key) in (None, key)

    def test_loader_with_small_cache_under_threads(self, tmp_path, write_image):
        paths = []
        for i in range(12):
            write_image(f"images/{i}.png", (20 * i, 0, 250 - 20 * i))
            paths.append(f"images/{i}.png")
        loader = ImageBatchLoader(size=8, max_workers=4, cache_size=3, root=tmp_path)
        batches = [loader.load(paths) for _ in range(3)]
        assert_array_equal(batches[0], batches[2])
        assert batches[0][0, 0].mean() < batches[0][-1, 0].mean()


class TestVggShapes:
    def test_reference_architecture(self):
        shapes = layer_shapes(2)
        assert shapes[f"{HEAD_PREFIX}/weight"] == (4096, 2)
        assert shapes["image/fc1/weight"] == (512 * 7 * 7, 4096)
        assert len([name for name in shapes if name.endswith('/kernel')]) == 13

    def test_pooling_schedule(self):
        assert pooling_schedule(224) == ([True] * 5, 7)
        assert pooling_schedule(8) == ([True, True, True, False, False], 1)

    def test_eighth_width(self):
        params = vgg16_init(2, width_scale=1 / 8, image_size=32)
        assert params["image/conv1_1/kernel"].shape[0] == 8
        assert params.feature_dim == 512
        assert layer_shapes(2, 1 / 8)["image/fc1/weight"] == (64 * 7 * 7, 512)

    def test_full_width_fc2_output(self, rng):
        params = vgg16_init(2, width_scale=1.0, image_size=32)
        out = vgg16_forward(rng.standard_normal((2, 3, 32, 32)).astype(np.float32), params, 'fc2')
        assert out.shape == (2, 4096)

    def test_scaled_logits(self, rng):
        params = vgg16_init(5, width_scale=1 / 8, image_size=32)
        out = vgg16_forward(rng.standard_normal((4, 3, 32, 32)).astype(np.float32), params, 'logits')
        assert out.shape == (4, 5)

    def test_wrong_image_size(self, rng):
        params = vgg16_init(2, width_scale=1 / 16, image_size=16)
        with pytest.raises(ValueError):
            vgg16_forward(rng.standard_normal((1, 3, 32, 32)), params)

    @pytest.mark.parametrize("scale", [0.0, 1.5])
    def test_width_scale_range(self, scale):
        with pytest.raises(ConfigurationError):
            vgg16_init(2, width_scale=scale, image_size=16)

    def test_deterministic_without_dropout(self, rng):
        params = vgg16_init(3, width_scale=1 / 16, image_size=16)
        images = rng.standard_normal((2, 3, 16, 16)).astype(np.float32)
        assert_array_equal(vgg16_forward(images, params).data, vgg16_forward(images, params).data)


class TestPretrained:
    @staticmethod
    def converted(image_size=32, **replace):
        entries = {name: np.full(shape, 0.01, dtype=np.float32)
                   for name, shape in layer_shapes(None, 1.0, image_size).items()}
        entries.update(replace)
        return entries

    def test_body_copied_head_fresh(self):
        params = vgg16_init(2, width_scale=1.0, pretrained=self.converted(), image_size=32)
        assert np.all(params["image/conv3_2/kernel"].data == np.float32(0.01))
        assert np.all(params["image/fc2/weight"].data == np.float32(0.01))
        assert not np.all(params[f"{HEAD_PREFIX}/weight"].data == np.float32(0.01))

    def test_wrong_fc1_shape(self):
        broken = self.converted(**{"image/fc1/weight": np.zeros((10, 4096), dtype=np.float32)})
        with pytest.raises(IncompatibilityError) as excinfo:
            vgg16_init(2, width_scale=1.0, pretrained=broken, image_size=32)
        assert excinfo.value.tensor == "image/fc1/weight"

    def test_missing_tensor(self):
        entries = self.converted()
        del entries["image/conv5_3/bias"]
        with pytest.raises(IncompatibilityError, match="conv5_3"):
            vgg16_init(2, width_scale=1.0, pretrained=entries, image_size=32)

    def test_scaled_branch_cannot_use_pretrained(self):
        with pytest.raises(IncompatibilityError):
            vgg16_init(2, width_scale=0.5, pretrained=self.converted(), image_size=32)


def test_vgg_overfits_red_versus_blue(write_image):
    colors = [(220, 20, 20), (20, 20, 220)]
    images, labels = [], []
    for i in range(8):
        path = write_image(f"train/{i}.png", colors[i % 2], size=(24, 24))
        images.append(preprocess_image(load_raster(path), size=32))
        labels.append(i % 2)
    dataset = PairDataset(labels=np.array(labels), images=np.stack(images))

    config = train_config_for('image', lr=1e-3, max_epochs=50, batch_size=8, patience=50,
                              width_scale=1 / 8, image_size=32, seed=0)
    branch = vgg16_init(2, width_scale=1 / 8, image_size=32, seed=0)
    model = build_model(config, image_branch=branch, num_classes=2)

    result = train(config, dataset, dataset, model)

    assert result.best_dev_accuracy == 1.0
    assert result.epochs_run <= 50
    predicted, _ = predict(model, image_batch=dataset.images)
    assert_array_equal(predicted, labels)
