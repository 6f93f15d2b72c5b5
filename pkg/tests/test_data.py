import hashlib
import logging

import numpy as np
import pytest
from PIL import Image

from styleseg import data
from styleseg.data import (
    BinaryMask,
    ConfigError,
    CorpusError,
    CorpusManifest,
    IngestConfig,
    StyleParams,
    SynthConfig,
    generate_base_shape,
    generate_synthetic_corpus,
    load_corpus,
    render_style,
)
from styleseg.metrics import dice

import oracles

HEADER = "image_id,mask_file,preference_label,planted_style,split\n"


def two_styles(**kw):
    return SynthConfig(styles=[StyleParams(margin=3, name="loose"), StyleParams(margin=-3, name="tight")], **kw)


def write_corpus(root, rows, image_size=(40, 30), masks=None):
    (root / "images").mkdir(parents=True)
    (root / "masks").mkdir()
    masks = masks or {}
    for image_id, mask_file, *_ in rows:
        img = root / "images" / f"{image_id}.png"
        if not img.exists():
            Image.fromarray(np.full(image_size[::-1] + (3,), 128, np.uint8)).save(img)
        grid = masks.get(mask_file)
        if grid is None:
            grid = np.zeros(image_size[::-1], np.uint8)
            grid[5:20, 5:15] = 255
        Image.fromarray(grid).save(root / mask_file)
    text = HEADER + "".join(",".join(map(str, r)) + "\n" for r in rows)
    (root / "manifest.csv").write_text(text)


def test_load_corpus_groups_and_resizes(tmp_path):
    rows = [
        ("a", "masks/a__0.png", "A00+T1+E", 0, "train"),
        ("a", "masks/a__1.png", "A01+T2+N", 1, "train"),
        ("b", "masks/b__0.png", "", "", "test"),
    ]
    other = np.zeros((30, 40), np.uint8)
    other[0:10, 0:10] = 255
    write_corpus(tmp_path, rows, masks={"masks/a__1.png": other})
    samples, manifest = load_corpus(tmp_path, IngestConfig(resolution=32))
    assert [s.image.id for s in samples] == ["a", "b"]
    assert samples[0].k == 2 and samples[1].k == 1
    assert samples[0].image.pixels.shape == (32, 32, 3)
    assert samples[0].masks[0].grid.shape == (32, 32)
    assert set(np.unique(samples[0].masks[0].grid)) <= {0, 1}
    assert samples[0].masks[1].source_label == "A01+T2+N"
    assert samples[0].masks[1].planted_style == 1
    assert samples[1].masks[0].planted_style is None
    assert manifest.image_ids("test") == ["b"]


def test_binarize_at_half_peak(tmp_path):
    grid = np.zeros((30, 40), np.uint8)
    grid[:, :10] = 100
    grid[:, 10:20] = 49
    write_corpus(tmp_path, [("a", "masks/a__0.png", "", "", "train")], masks={"masks/a__0.png": grid})
    samples, _ = load_corpus(tmp_path, IngestConfig(resolution=40))
    # only the 10 columns at 100 survive; 49 is below half the peak
    assert samples[0].masks[0].grid.sum() == 40 * 10


def test_missing_mask_names_row(tmp_path):
    write_corpus(tmp_path, [("a", "masks/a__0.png", "", "", "train")])
    with open(tmp_path / "manifest.csv", "a") as fh:
        fh.write("a,masks/a__9.png,,,train\n")
    with pytest.raises(CorpusError, match=r"line 3 .*a__9"):
        load_corpus(tmp_path)


def test_bad_manifest_header(tmp_path):
    write_corpus(tmp_path, [("a", "masks/a__0.png", "", "", "train")])
    (tmp_path / "manifest.csv").write_text("id,mask\n")
    with pytest.raises(CorpusError, match="header"):
        load_corpus(tmp_path)


def test_image_in_two_splits_rejected(tmp_path):
    rows = [("a", "masks/a__0.png", "", "", "train"), ("a", "masks/a__1.png", "", "", "val")]
    write_corpus(tmp_path, rows)
    with pytest.raises(CorpusError, match="two splits"):
        load_corpus(tmp_path)


def test_empty_mask_kept_with_warning_and_duplicates_dropped(tmp_path, caplog):
    empty = np.zeros((30, 40), np.uint8)
    rows = [
        ("a", "masks/a__0.png", "", "", "train"),
        ("a", "masks/a__1.png", "", "", "train"),
        ("a", "masks/a__2.png", "", "", "train"),
    ]
    write_corpus(tmp_path, rows, masks={"masks/a__2.png": empty})
    with caplog.at_level(logging.WARNING):
        samples, _ = load_corpus(tmp_path)
    assert samples[0].k == 2
    assert not samples[0].masks[1].grid.any()
    assert "empty mask kept" in caplog.text and "duplicate" in caplog.text


def test_manifest_roundtrip(tmp_path):
    m = CorpusManifest([data.ManifestRow("x", "masks/x__0.png", "S0", 0, "val")])
    path = tmp_path / "manifest.csv"
    path.write_text(m.to_csv())
    assert CorpusManifest.read(path).rows == m.rows


# --- generator -----------------------------------------------------------------


def test_config_validation():
    with pytest.raises(ConfigError):
        SynthConfig(styles=[]).validate()
    with pytest.raises(ConfigError):
        two_styles(n_images=0).validate()
    with pytest.raises(ConfigError):
        SynthConfig(styles=[StyleParams(margin=1)] * 2).validate()
    with pytest.raises(ConfigError):
        StyleParams(jaggedness_amplitude=-1)


def test_base_shape_single_component_in_range():
    for seed in range(40):
        grid = generate_base_shape(seed, 64).grid
        frac = grid.mean()
        assert 0.05 <= frac <= 0.40
        _, count = oracles.components_flood(grid)
        assert count == 1


def test_base_shape_deterministic():
    a = generate_base_shape(7, 64).grid
    b = generate_base_shape(7, 64).grid
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, generate_base_shape(8, 64).grid)


def test_identity_style_is_identity():
    base = generate_base_shape(3, 64)
    np.testing.assert_array_equal(render_style(base, StyleParams()).grid, base.grid)


def test_margins_nest():
    base = generate_base_shape(4, 64)
    loose = render_style(base, StyleParams(margin=3)).grid.astype(bool)
    tight = render_style(base, StyleParams(margin=-3)).grid.astype(bool)
    g = base.grid.astype(bool)
    assert (tight <= g).all() and (g <= loose).all()
    assert tight.sum() < g.sum() < loose.sum()


@pytest.mark.parametrize("seed", range(5))
def test_larger_margin_never_shrinks_area(seed):
    base = generate_base_shape(seed, 64)
    areas = [render_style(base, StyleParams(margin=m, smoothing_radius=1)).grid.sum() for m in range(-5, 6)]
    assert areas == sorted(areas)


def test_disc_margin_dice_matches_hand_formula():
    n = 96
    yy, xx = np.mgrid[0:n, 0:n]
    base = BinaryMask((np.hypot(yy - 47.5, xx - 47.5) <= 16).astype(np.uint8))
    loose = render_style(base, StyleParams(margin=4)).grid
    tight = render_style(base, StyleParams(margin=-4)).grid
    expected = 2 * 12**2 / (12**2 + 20**2)
    assert dice(loose, tight) == pytest.approx(expected, abs=0.05)


def test_margin_too_large_rejected():
    base = generate_base_shape(0, 32)
    with pytest.raises(ValueError):
        render_style(base, StyleParams(margin=8))


def test_erosion_that_empties_mask_shrinks_margin(caplog):
    grid = np.zeros((64, 64), np.uint8)
    grid[30:33, 30:33] = 1
    with caplog.at_level(logging.WARNING):
        out = render_style(BinaryMask(grid), StyleParams(margin=-5, name="tight")).grid
    assert out.any()
    assert "margin reduced" in caplog.text


def test_jagged_style_changes_boundary_only_locally():
    base = generate_base_shape(5, 64)
    jag = render_style(base, StyleParams(jaggedness_amplitude=2.0, jaggedness_frequency=10, seed=1)).grid
    assert dice(jag, base.grid) > 0.8
    assert not np.array_equal(jag, base.grid)


def _tree_hash(root):
    h = hashlib.sha256()
    for path in sorted(p for p in root.rglob("*") if p.is_file()):
        h.update(str(path.relative_to(root)).encode())
        h.update(path.read_bytes())
    return h.hexdigest()


def test_generation_is_byte_identical(tmp_path):
    cfg = two_styles(n_images=12, seed=5, coverage_p=0.6)
    generate_synthetic_corpus(cfg, tmp_path / "a")
    generate_synthetic_corpus(cfg, tmp_path / "b")
    assert _tree_hash(tmp_path / "a") == _tree_hash(tmp_path / "b")
    generate_synthetic_corpus(two_styles(n_images=12, seed=6, coverage_p=0.6), tmp_path / "c")
    assert _tree_hash(tmp_path / "a") != _tree_hash(tmp_path / "c")


def test_generated_corpus_layout_and_coverage(tmp_path):
    cfg = two_styles(n_images=30, seed=1, coverage_p=0.5)
    manifest = generate_synthetic_corpus(cfg, tmp_path)
    samples, read_back = load_corpus(tmp_path, IngestConfig(resolution=64))
    assert read_back.rows == manifest.rows
    assert len(samples) == 30 and all(s.k >= 1 for s in samples)
    assert {r.planted_style for r in manifest.rows} == {0, 1}
    assert {r.preference_label for r in manifest.rows} == {"loose", "tight"}
    counts = {s: sum(r.split == s for r in manifest.rows if r.mask_file.endswith("__0.png")) for s in data.SPLITS}
    assert counts == {"train": 21, "val": 4, "test": 5}
    for r in manifest.rows:
        assert r.mask_file.startswith(f"masks/{r.image_id}__")
        assert set(np.unique(np.asarray(Image.open(tmp_path / r.mask_file)))) <= {0, 255}


def test_lesion_is_visible_in_image(tmp_path):
    generate_synthetic_corpus(two_styles(n_images=5), tmp_path)
    samples, _ = load_corpus(tmp_path)
    for s in samples:
        base = s.masks[0].grid.astype(bool)  # loose mask contains the lesion
        inside = s.image.pixels[render_style(BinaryMask(base.astype(np.uint8)), StyleParams(margin=-3)).grid.astype(bool)]
        outside = s.image.pixels[~base]
        assert inside.mean() < outside.mean() - 0.15
