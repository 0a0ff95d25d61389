"""PSNR conventions, directory evaluation, and table rendering."""

import numpy as np
import pytest

from warship_sr.evaluation import (
    PSNR_CAP_DB,
    EvalResult,
    EvaluationError,
    evaluate_set,
    psnr,
    render_table,
)
from warship_sr.images import degrade, save_image


def structured(h, w, seed=0):
    rs = np.random.RandomState(seed)
    yy, xx = np.mgrid[0:h, 0:w]
    img = 0.5 + 0.3 * np.sin(xx / 4.0 + yy / 7.0) + 0.05 * rs.rand(h, w)
    return np.clip(img, 0.0, 1.0)


# ------------------------------------------------------------------ metric

def test_spot_value_8bit_mse_one():
    # per-pixel squared error of (1/255)^2 is MSE 1.0 on the 8-bit scale
    a = np.zeros((10, 10))
    b = np.full((10, 10), 1.0 / 255.0)
    assert psnr(a, b) == pytest.approx(48.1308, abs=1e-3)


def test_identical_images_hit_cap():
    img = structured(12, 12)
    assert psnr(img, img) == PSNR_CAP_DB
    assert psnr(img, img, shave=2) == PSNR_CAP_DB


def test_symmetry():
    a = structured(16, 14, seed=1)
    b = structured(16, 14, seed=2)
    assert psnr(a, b) == psnr(b, a)


@pytest.mark.parametrize("pair", [(0.01, 0.02), (0.02, 0.05)])
def test_noise_monotonic(pair):
    rs = np.random.RandomState(7)
    img = structured(32, 32)
    noise = rs.uniform(-1.0, 1.0, img.shape)
    lo, hi = pair
    assert psnr(img, img + lo * noise) > psnr(img, img + hi * noise)


def test_shave_excludes_border_corruption():
    img = structured(24, 24, seed=3)
    bad = img.copy()
    bad[0, :] = 0.0  # corrupt the top row only
    p0 = psnr(img, bad, shave=0)
    p1 = psnr(img, bad, shave=1)
    p3 = psnr(img, bad, shave=3)
    assert p1 > p0
    assert p3 >= p1  # corruption already excluded at shave=1
    assert p1 == PSNR_CAP_DB or p1 > p0


def test_validation_errors():
    img = structured(10, 10)
    with pytest.raises(EvaluationError):
        psnr(img, np.zeros((10, 11)))
    with pytest.raises(EvaluationError):
        psnr(np.zeros((4, 4, 3)), np.zeros((4, 4, 3)))
    with pytest.raises(EvaluationError):
        psnr(img, img, shave=-1)
    with pytest.raises(EvaluationError):
        psnr(img, img, shave=5)  # 2*5 >= 10 leaves nothing


# ----------------------------------------------------------- directory eval

def test_identity_stub_equals_bicubic(tmp_path):
    for i in range(3):
        save_image(structured(52, 48, seed=i), tmp_path / ("im%d.pgm" % i))
    base = evaluate_set(lambda y: y, tmp_path, scale=2, method="bicubic")
    stub = evaluate_set(lambda y: y.copy(), tmp_path, scale=2, method="stub")
    assert [e["psnr_db"] for e in base.per_image] == [e["psnr_db"] for e in stub.per_image]
    assert base.mean_psnr_db == pytest.approx(
        np.mean([e["psnr_db"] for e in base.per_image]), abs=1e-9
    )


def test_evaluate_sorted_and_deterministic(tmp_path):
    for name in ("zz.pgm", "aa.pgm", "mm.pgm"):
        save_image(structured(48, 48, seed=len(name)), tmp_path / name)
    r1 = evaluate_set(lambda y: y, tmp_path, scale=2)
    r2 = evaluate_set(lambda y: y, tmp_path, scale=2)
    assert [e["name"] for e in r1.per_image] == ["aa.pgm", "mm.pgm", "zz.pgm"]
    assert r1.to_json() == r2.to_json()


def test_evaluate_skips_unreadable(tmp_path, capsys):
    save_image(structured(48, 48), tmp_path / "good.pgm")
    (tmp_path / "bad.pgm").write_text("P2\n9 9\n255\n1 2 3\n")
    res = evaluate_set(lambda y: y, tmp_path, scale=2)
    assert len(res.per_image) == 1
    assert res.skipped and res.skipped[0]["name"] == "bad.pgm"


def test_evaluate_empty_and_all_failed(tmp_path):
    with pytest.raises(EvaluationError):
        evaluate_set(lambda y: y, tmp_path, scale=2)
    (tmp_path / "only.pgm").write_text("P2\n9 9\n255\n1\n")
    with pytest.raises(EvaluationError):
        evaluate_set(lambda y: y, tmp_path, scale=2)


def test_evaluate_uses_degrade_convention(tmp_path):
    img = structured(64, 64, seed=9)
    save_image(img, tmp_path / "one.pgm")
    res = evaluate_set(lambda y: y, tmp_path, scale=2)
    # independent recomputation of the single score
    from warship_sr.images import load_image

    hr = load_image(tmp_path / "one.pgm")
    expect = psnr(hr, degrade(hr, 2), shave=2)
    assert res.per_image[0]["psnr_db"] == pytest.approx(expect, abs=1e-12)


# ---------------------------------------------------------------- rendering

def test_render_two_decimals():
    r = EvalResult("bicubic", 2, [{"name": "a", "psnr_db": 36.9}], 36.9)
    text = render_table([r])
    assert "36.90" in text
    assert "36.9 " not in text


def test_render_columns():
    rows = [
        EvalResult("bicubic", 2, [{"name": "a", "psnr_db": 33.66}], 33.66),
        EvalResult("model", 2, [{"name": "a", "psnr_db": 36.86}], 36.86),
    ]
    text = render_table(rows)
    assert "33.66" in text and "36.86" in text
    assert "bicubic" in text and "model" in text
    assert text.splitlines()[0].startswith("Method")


def test_render_notes_cap():
    r = EvalResult("m", 2, [{"name": "a", "psnr_db": PSNR_CAP_DB}], PSNR_CAP_DB)
    assert "capped" in render_table([r])
    r2 = EvalResult("m", 2, [{"name": "a", "psnr_db": 30.0}], 30.0)
    assert "capped" not in render_table([r2])


def test_render_empty_rejected():
    with pytest.raises(EvaluationError):
        render_table([])


def test_json_roundtrip():
    r = EvalResult(
        "model", 2,
        [{"name": "a.png", "psnr_db": 31.25}, {"name": "b.png", "psnr_db": 29.5}],
        30.375,
        skipped=[{"name": "c.png", "reason": "truncated"}],
    )
    back = EvalResult.from_json(r.to_json())
    assert back == r
    assert back.to_json() == r.to_json()
