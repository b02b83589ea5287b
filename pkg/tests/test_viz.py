import numpy as np

from mmattn import viz


def test_uniform_attention_is_mid_gray():
    img = viz.attention_raster(np.full(16, 1 / 16))
    assert img.shape == (64, 64) and img.dtype == np.uint8
    assert (img == viz.MID_GRAY).all()


def test_one_hot_attention_is_brightest_top_left():
    alpha = np.zeros(16)
    alpha[0] = 1.0
    img = viz.attention_raster(alpha).astype(float)
    blocks = img.reshape(4, 16, 4, 16).mean(axis=(1, 3))
    assert np.unravel_index(blocks.argmax(), blocks.shape) == (0, 0)
    assert img.max() == 255 and (img[:8, :8] == 255).all()
    assert img[32:, 32:].max() == 0


def test_upsample_is_bilinear_with_clamped_edges():
    grid = np.array([[0.0, 1.0], [2.0, 3.0]])
    up = viz.upsample(grid, 2)
    assert up.shape == (4, 4)
    np.testing.assert_allclose(up[0], [0.0, 0.25, 0.75, 1.0])
    np.testing.assert_allclose(up[:, 0], [0.0, 0.5, 1.5, 2.0])


def test_non_square_regions_have_no_raster():
    assert viz.grid_side(12) is None and viz.attention_raster(np.ones(12) / 12) is None
    assert viz.grid_side(196) == 14


def test_pgm_round_trip(tmp_path):
    img = np.arange(64 * 32, dtype=np.uint32).reshape(32, 64).astype(np.uint8)
    path = tmp_path / "a.pgm"
    viz.write_pgm(path, img)
    assert path.read_bytes().startswith(b"P5\n64 32\n255\n")
    np.testing.assert_array_equal(viz.read_pgm(path), img)


def test_dump_row_format_and_round_trip(tmp_path):
    line = viz.format_row("hund", 3, [0.25, 0.75], [1.0, 0.0, 0.0, 0.0])
    assert line == "hund\tt=3\ttxt:0.250000,0.750000\tim:1.000000,0.000000,0.000000,0.000000"
    rows = [viz.DumpRow("a", 1, np.array([0.5, 0.5]), np.array([0.1, 0.9])), viz.DumpRow("b", 2, np.array([1.0, 0.0]), np.zeros(0))]
    path = tmp_path / "d.tsv"
    viz.write_dump(path, rows)
    back = viz.read_dump(path)
    assert [r.token for r in back] == ["a", "b"] and [r.step for r in back] == [1, 2]
    np.testing.assert_allclose(back[0].alpha_im, [0.1, 0.9])
    assert back[1].alpha_im.size == 0


def test_figures_are_written(tmp_path):
    rows = [viz.DumpRow(w, t + 1, np.array([0.2, 0.3, 0.5]), np.full(16, 1 / 16)) for t, w in enumerate(["ein", "hund"])]
    viz.plot_alignment(tmp_path / "a.png", ["a", "dog", "runs"], rows, "ein hund")
    viz.plot_curves(tmp_path / "c.png", {"A": [3.0, 2.0, 1.5], "B": [3.1, 2.5, 2.0]}, "loss")
    viz.plot_entropy(tmp_path / "e.png", {"A": 1.3, "B": 0.7}, uniform=1.38)
    for name in ("a.png", "c.png", "e.png"):
        assert (tmp_path / name).read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_dumped_probabilities_sum_to_one():
    rng = np.random.default_rng(4)
    for k in (3, 16, 196):
        alpha = rng.dirichlet(np.ones(k) * 0.3)
        row = viz.parse_row(viz.format_row("w", 1, alpha, alpha))
        assert abs(row.alpha_txt.sum() - 1.0) < 1e-9
        assert np.abs(row.alpha_txt - alpha).max() <= 1e-6
    assert viz.simplex_digits([1 / 3, 1 / 3, 1 / 3]) == ["0.333334", "0.333333", "0.333333"]
    assert viz.simplex_digits([2.0, -1.5]) == ["2.000000", "-1.500000"]
