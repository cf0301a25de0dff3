import math

import numpy as np
import pytest

from phasednn import net as nn
from phasednn.bands import ConvolutionPlan
from phasednn.data import Dataset, load_csv, four_scale_target
from phasednn.kernels import make_bands
from phasednn.model import (BandTerm, PhaseDnnModel, RunConfig, RunError, derive_seed, errors,
                            evaluate, imaginary_residue, residual, run, train_band, train_base)

TWO_PI = 2 * math.pi
PERIODIC = ConvolutionPlan(delta=TWO_PI, boundary="periodic", period=TWO_PI)
BAND_20_25 = make_bands("explicit", intervals=[(20, 25)])[0]


def grid(n):
    return np.linspace(-math.pi, math.pi, n, endpoint=False)


def rel_l2(a, b):
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))


def const_net(value, widths=(1, 3, 1)):
    net = nn.Network(widths)
    net.biases[-1][...] = value
    return net


def test_derive_seed_is_stable_and_distinct():
    assert derive_seed(0, 1, 2) == derive_seed(0, 1, 2)
    seeds = {derive_seed(s, r, p, q) for s in range(3) for r in range(3)
             for p in range(3) for q in range(2)}
    assert len(seeds) == 54


def test_run_config_validation():
    with pytest.raises(ValueError):
        RunConfig(rounds=0)
    with pytest.raises(ValueError):
        RunConfig(band_epochs=-1)
    with pytest.raises(ValueError):
        RunConfig(batch_size=0)


def test_train_base_zero_target():
    xs = grid(2000)
    data = Dataset(xs, np.zeros_like(xs))
    base = train_base(data, RunConfig(base_epochs=100, batch_size=32))
    assert nn.mse_loss(base, data) < 1e-6


def test_train_base_fits_low_frequencies_first():
    from phasednn.spectral import dft
    xs = grid(10000)
    data = Dataset(xs, four_scale_target()(xs))
    base = train_base(data, RunConfig(base_epochs=10, batch_size=32))
    ref = dft(data)
    res = dft(Dataset(xs, data.ys - base(xs)))
    rel = {k: abs(res.at(k)) / abs(ref.at(k)) for k in (1, 3, 23, 137, 203)}
    assert max(rel[1], rel[3]) < min(rel[23], rel[137], rel[203])


def test_train_base_deterministic():
    xs = grid(500)
    data = Dataset(xs, np.sin(xs))
    cfg = RunConfig(base_epochs=3, batch_size=50, seed=4)
    assert train_base(data, cfg) == train_base(data, cfg)


def test_residual_examples():
    xs = grid(64)
    base = nn.Network.initialize((1, 5, 1), 0)
    exact = Dataset(xs, base(xs))
    assert np.all(residual(exact, PhaseDnnModel(base)).ys == 0)
    data = Dataset(xs, np.cos(xs))
    assert np.array_equal(residual(data, PhaseDnnModel()).ys, data.ys)
    r = residual(data, PhaseDnnModel(base))
    assert np.array_equal(r.ys + base(xs), data.ys) or np.allclose(r.ys + base(xs), data.ys,
                                                                    rtol=0, atol=1e-15)


def test_train_band_zero_residual():
    xs = grid(2000)
    cfg = RunConfig(band_epochs=50, batch_size=32, plan=PERIODIC)
    r = train_band(Dataset(xs, np.zeros_like(xs)), BAND_20_25, cfg)
    fine = np.linspace(-math.pi, math.pi, 3001)
    assert np.max(np.abs(r.term.real(fine))) < 1e-3
    assert np.max(np.abs(r.term.imag(fine))) < 1e-3


def test_train_band_learns_shifted_sine():
    xs = grid(10000)
    cfg = RunConfig(band_epochs=50, batch_size=32, plan=PERIODIC)
    r = train_band(Dataset(xs, np.sin(23 * xs)), BAND_20_25, cfg)
    assert rel_l2(r.term.real(xs), 0.5 * np.sin(0.5 * xs)) < 0.05
    assert rel_l2(r.term.imag(xs), -0.5 * np.cos(0.5 * xs)) < 0.05
    assert r.convolution_seconds >= 0 and r.training_seconds > 0 and r.sparse_points == 0


def test_evaluate_examples():
    xs = grid(50)
    base = nn.Network.initialize((1, 4, 1), 1)
    assert np.array_equal(evaluate(PhaseDnnModel(base), xs), base(xs))
    assert evaluate(PhaseDnnModel(base), 0.3) == base(0.3)
    real = nn.Network.initialize((1, 4, 1), 2)
    band0 = make_bands("explicit", intervals=[(-1, 1)])[0]
    m = PhaseDnnModel(base, [BandTerm(band0, real, nn.Network((1, 4, 1)))])
    np.testing.assert_allclose(evaluate(m, xs), base(xs) + real(xs), rtol=0, atol=1e-15)


def test_conjugate_pair_sums_to_real():
    xs = grid(200)
    plus, minus = make_bands("explicit", intervals=[(20, 25), (-25, -20)])
    re = nn.Network.initialize((1, 6, 1), 3)
    im = nn.Network.initialize((1, 6, 1), 4)
    neg_im = im.copy()
    neg_im.weights[-1][...] *= -1
    neg_im.biases[-1][...] *= -1
    m = PhaseDnnModel(None, [BandTerm(plus, re, im), BandTerm(minus, re, neg_im)])
    assert np.max(np.abs(imaginary_residue(m, xs))) < 1e-14
    z = BandTerm(plus, re, im).contribution(xs)
    np.testing.assert_allclose(evaluate(m, xs), 2 * z.real, rtol=0, atol=1e-14)


def test_band_term_requires_matching_specs():
    with pytest.raises(ValueError):
        BandTerm(BAND_20_25, nn.Network((1, 2, 1)), nn.Network((1, 3, 1)))


def test_additivity_and_band_removal():
    xs = grid(100)
    bands = make_bands("explicit", intervals=[(0, 5), (20, 25), (-25, -20)])
    terms = [BandTerm(b, nn.Network.initialize((1, 5, 1), i), nn.Network.initialize((1, 5, 1), 9 + i))
             for i, b in enumerate(bands)]
    base = nn.Network.initialize((1, 5, 1), 77)
    full = PhaseDnnModel(base, terms)
    parts = base(xs) + sum(t.contribution(xs).real for t in terms)
    np.testing.assert_allclose(evaluate(full, xs), parts, rtol=0, atol=1e-13)
    dropped = PhaseDnnModel(base, terms[:1] + terms[2:])
    np.testing.assert_allclose(evaluate(full, xs) - evaluate(dropped, xs),
                               terms[1].contribution(xs).real, rtol=0, atol=1e-13)


def test_run_with_zero_bands_is_base_only():
    xs = grid(300)
    data = Dataset(xs, np.sin(xs))
    cfg = RunConfig(base_epochs=5, batch_size=30, bands=[])
    model, rep = run(data, cfg, data)
    assert model.terms == [] and model.base == train_base(data, cfg)
    assert rep.rows == [] and rep.base_seconds > 0
    assert rep.test_rel_l2 == pytest.approx(errors(model, data)[1])


def _small_cfg(**kw):
    bands = make_bands("explicit", intervals=[(-25, -20), (-5, 0), (0, 5), (20, 25)])
    base = dict(band_widths=(1, 20, 20, 1), band_epochs=3, batch_size=64, bands=bands,
                plan=PERIODIC, seed=3)
    base.update(kw)
    return RunConfig(**base)


def test_parallel_equals_serial():
    xs = grid(1500)
    data = Dataset(xs, np.sin(xs) + np.sin(23 * xs))
    serial, rs = run(data, _small_cfg(workers=1))
    parallel, rp = run(data, _small_cfg(workers=3))
    assert len(serial.terms) == len(parallel.terms) == 4
    for a, b in zip(serial.terms, parallel.terms):
        assert a.band == b.band and a.real == b.real and a.imag == b.imag
    assert [r["final_loss"] for r in rs.rows] == [r["final_loss"] for r in rp.rows]


def test_two_rounds_reduce_residual():
    xs = grid(2000)
    data = Dataset(xs, np.sin(xs) + np.sin(23 * xs))
    for seed in range(3):
        model, rep = run(data, _small_cfg(rounds=2, seed=seed))
        assert model.rounds == 2 and len(model.terms) == 8
        assert [r["round"] for r in rep.rows] == [1] * 4 + [2] * 4
        assert rep.round_residual_l2[1] <= rep.round_residual_l2[0]


def test_residual_identity_after_run():
    xs = grid(800)
    data = Dataset(xs, np.sin(xs) + np.sin(23 * xs))
    model, _ = run(data, _small_cfg())
    r = residual(data, model)
    np.testing.assert_allclose(evaluate(model, xs) + r.ys, data.ys, rtol=0, atol=1e-13)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_band_failure_gives_partial_report():
    xs = grid(200)
    data = Dataset(xs, np.sin(xs))
    bad = _small_cfg(lr=1e300, band_epochs=5)
    with pytest.raises(RunError) as info:
        run(data, bad)
    model, rep = info.value.partial
    assert rep.failed and model.terms == []


def test_run_requires_sorted_data():
    with pytest.raises(ValueError):
        run(Dataset([0.2, 0.1], [0.0, 0.0]), RunConfig())


def test_bundle_round_trip(tmp_path):
    xs = grid(600)
    data = Dataset(xs, np.sin(xs) + np.sin(23 * xs))
    model, _ = run(data, _small_cfg(base_epochs=1, base_widths=(1, 8, 1), rounds=2))
    model.save(tmp_path / "m")
    again = PhaseDnnModel.load(tmp_path / "m")
    assert np.array_equal(evaluate(again, xs), evaluate(model, xs))
    assert again.rounds == 2 and len(again.terms) == 8


def test_sec4_sum_is_nearly_real(sec4_run):
    out, _ = sec4_run
    model = PhaseDnnModel.load(out / "model")
    test = load_csv(out / "test.csv")
    ratio = np.mean(np.abs(imaginary_residue(model, test.xs))) / np.mean(np.abs(test.ys))
    assert ratio < 0.05
