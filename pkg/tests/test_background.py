import pickle

import numpy as np
import pytest
from PIL import Image

from bgaug import imaging
from bgaug.background import cover_size, load_pool, sample_background, sample_background_params
from bgaug.errors import ConfigError
from bgaug.rng import Purpose, RngStream, derive_substream


def save_rgb(path, w, h, value=(10, 200, 30)):
    path.parent.mkdir(parents=True, exist_ok=True)
    img = np.zeros((h, w, 3), np.uint8)
    img[...] = value
    img[:, : w // 2, 0] = 250  # some structure
    Image.fromarray(img).save(path)
    return img


def test_load_pool_orders_paths(tmp_path):
    save_rgb(tmp_path / "b" / "x.png", 200, 200)
    save_rgb(tmp_path / "a.png", 160, 160)
    save_rgb(tmp_path / "b" / "a.jpg", 300, 200)
    (tmp_path / "notes.txt").write_text("not an image")
    pool = load_pool(tmp_path, 160, 160)
    assert [e.path for e in pool.entries] == ["a.png", "b/a.jpg", "b/x.png"]
    assert pool.skipped == 0


def test_empty_pool_is_config_error(tmp_path):
    with pytest.raises(ConfigError):
        load_pool(tmp_path, 160, 160)
    with pytest.raises(ConfigError):
        load_pool(tmp_path / "nope", 160, 160)


def test_thumbnail_skipped(tmp_path):
    save_rgb(tmp_path / "thumb.png", 10, 10)
    save_rgb(tmp_path / "edge.png", 40, 40)  # exactly target/4: kept
    (tmp_path / "broken.png").write_bytes(b"garbage")
    pool = load_pool(tmp_path, 160, 160)
    assert [e.path for e in pool.entries] == ["edge.png"]
    assert pool.skipped == 2


@pytest.mark.parametrize("src,target,expected", [
    ((160, 160), (160, 160), (160, 160)),
    ((320, 160), (160, 160), (320, 160)),
    ((100, 50), (160, 160), (320, 160)),
    ((640, 480), (160, 160), (213, 160)),
    ((41, 300), (160, 160), (160, 1171)),
])
def test_cover_size(src, target, expected):
    got = cover_size(*src, *target)
    assert got == expected
    assert got[0] >= target[0] and got[1] >= target[1]


def test_single_exact_image_has_no_freedom(tmp_path):
    rgb = save_rgb(tmp_path / "one.png", 160, 160)
    pool = load_pool(tmp_path, 160, 160)
    for i in range(5):
        s = derive_substream(1, 0, i, Purpose.BACKGROUND)
        assert sample_background_params(pool, s) == (0, 0, 0)
        assert s.counter == 3
    out = sample_background(pool, RngStream(3))
    assert np.array_equal(out, imaging.to_grayscale(rgb))


def test_wide_image_crop_range(tmp_path):
    save_rgb(tmp_path / "wide.png", 320, 160)
    pool = load_pool(tmp_path, 160, 160)
    xs = set()
    for i in range(3000):
        idx, cx, cy = sample_background_params(pool, derive_substream(5, 0, i, Purpose.BACKGROUND))
        assert idx == 0 and cy == 0 and 0 <= cx <= 160
        xs.add(cx)
    assert min(xs) == 0 and max(xs) == 160


def test_output_size_and_determinism(tmp_path):
    save_rgb(tmp_path / "a.png", 500, 333)
    save_rgb(tmp_path / "b.png", 90, 700)
    pool = load_pool(tmp_path, 160, 160)
    for i in range(20):
        a = sample_background(pool, derive_substream(9, 2, i, Purpose.BACKGROUND))
        b = sample_background(pool, derive_substream(9, 2, i, Purpose.BACKGROUND))
        assert a.shape == (160, 160) and a.dtype == np.uint8
        assert np.array_equal(a, b)


def test_entry_uniformity(tmp_path):
    for i in range(4):
        save_rgb(tmp_path / f"{i}.png", 160, 160)
    pool = load_pool(tmp_path, 160, 160)
    counts = np.zeros(4)
    for k in range(10_000):
        counts[sample_background_params(pool, derive_substream(77, 0, k, Purpose.BACKGROUND))[0]] += 1
    assert np.all(np.abs(counts / 10_000 - 0.25) <= 0.05)


def test_cache_does_not_change_output(tmp_path):
    save_rgb(tmp_path / "a.png", 400, 300)
    save_rgb(tmp_path / "b.png", 300, 400)
    cached = load_pool(tmp_path, 160, 160)
    uncached = load_pool(tmp_path, 160, 160, cache_bytes=0)
    for i in range(10):
        a = sample_background(cached, derive_substream(4, 0, i, Purpose.BACKGROUND))
        b = sample_background(uncached, derive_substream(4, 0, i, Purpose.BACKGROUND))
        assert np.array_equal(a, b)
    clone = pickle.loads(pickle.dumps(cached))
    assert np.array_equal(clone.render(0, 3, 0), cached.render(0, 3, 0))


def test_stats(tmp_path):
    save_rgb(tmp_path / "a.png", 400, 300)
    save_rgb(tmp_path / "b.png", 10, 10)
    stats = load_pool(tmp_path, 160, 160).stats()
    assert stats["entries"] == 1 and stats["skipped"] == 1
    assert (stats["min_width"], stats["max_height"]) == (400, 300)
