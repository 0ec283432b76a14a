"""Acceptance criteria 1-10, each reported as one pass/fail line.

The heavy criteria (5, 6, 7, 9) take tens of minutes on one core; run only
the quick ones with ``pytest -m "not slow"``.
"""

import math
import subprocess
import sys

import numpy as np
import pytest

from geoaniso.bench import aic_experiment, aic_win_fractions, circular_alpha_error
from geoaniso.covariance import AnisotropyParams, MaternSpec, matern, matern_bessel, matern_closed_form, practical_range
from geoaniso.grids import FieldGrid, GridDomain, rotate180
from geoaniso.likelihood import SearchConfig, fit_ml
from geoaniso.models import TrainingConfig, nf_spec, nv_spec, predict_normalized, prepare_inputs, train
from geoaniso.nn import gradient_check, init_params, param_count
from geoaniso.simulate import (
    generate_dataset,
    simulate_many,
    simulate_stream,
    training_param_grid,
    validation_param_grid,
)
from geoaniso.variogram import variogram_map, variogram_maps

NF_COUNTS = [10_496, 819_456, 2_097_664, 525_312, 0, 307_500, 903]
NV_COUNTS = [8_320, 262_272, 295_168, 131_584, 0, 153_900, 903]
NF_SHAPES = [(8, 8, 128), (4, 4, 256), (1, 1, 512), (1, 1, 1024), (1024,), (300,), (3,)]
NV_SHAPES = [(6, 6, 128), (3, 3, 128), (1, 1, 256), (1, 1, 512), (512,), (300,), (3,)]


def test_c01_architecture_counts(report):
    nf, nv = nf_spec(), nv_spec()
    ok = (param_count(nf) == 3_761_331 and param_count(nv) == 852_147
          and nf.layer_param_counts() == NF_COUNTS and nv.layer_param_counts() == NV_COUNTS)
    report(1, ok, f"NF {param_count(nf):,} NV {param_count(nv):,} (per-layer rows match: {ok})")
    assert ok


def test_c02_output_shapes(report):
    ok = nf_spec().output_shapes() == NF_SHAPES and nv_spec().output_shapes() == NV_SHAPES
    report(2, ok, f"NF {nf_spec().output_shapes()} NV {nv_spec().output_shapes()}")
    assert ok


def test_c03_matern(report):
    x = np.geomspace(1e-6, 30.0, 5000)
    rel = np.max(np.abs(matern_bessel(x, 1.0, 1.5) / matern_closed_form(x, 1.0, 1) - 1.0))
    ratio = practical_range(1.0) / 1.0
    r_small, r_big = practical_range(0.02), practical_range(5.0)

    def sig2(v):
        return float(f"{v:.2g}")

    ok = (rel <= 1e-10 and abs(ratio - 4.744) <= 1e-3
          and sig2(r_small) == sig2(0.095) and sig2(r_big) == sig2(23.8)
          and all(abs(practical_range(t) / t - 4.744) <= 1e-3 for t in (0.02, 0.5, 2.0, 5.0)))
    report(3, ok, f"max rel err {rel:.2e}; range/theta {ratio:.5f}; theta=0.02 -> {r_small:.4f}, theta=5 -> {r_big:.3f}")
    assert ok


def test_c04_gradient_check(report):
    res = {}
    for name, net, shape in (("NF", nf_spec(), (2, 16, 16, 1)), ("NV", nv_spec(), (2, 13, 13, 1))):
        rng = np.random.default_rng(2024)
        params = init_params(net, rng)
        errs = gradient_check(net, params, rng.normal(size=shape), 60, rng, step=1e-6)
        res[name] = (len(errs), float(errs.max()))
    ok = all(n >= 50 and e < 1e-4 for n, e in res.values())
    report(4, ok, "  ".join(f"{k}: {n} params, max rel err {e:.2e}" for k, (n, e) in res.items()))
    assert ok


@pytest.mark.slow
def test_c05_simulation_fidelity(report):
    p = AnisotropyParams(math.pi / 4, 0.5, 2.0, 1.0)
    N = 10_000
    X = simulate_many(GridDomain(), p, MaternSpec(1.5), range(N))
    site_var = X.reshape(N, -1).var(axis=0, ddof=1)
    pooled = float(site_var.mean())
    max_mean = float(np.abs(X.reshape(N, -1).mean(axis=0)).max())
    lines, ok = [], 0.95 <= pooled <= 1.05 and max_mean <= 4.0 / math.sqrt(N)
    for hx, hy in ((1, 0), (0, 1), (1, 1), (1, -1), (2, 0), (0, 2)):
        a = X[:, max(0, -hy):16 - max(0, hy), 0:16 - hx]
        b = X[:, max(0, hy):16 + min(0, hy), hx:16]
        m = (a * b).reshape(N, -1).mean(axis=1)
        v = (0.5 * (a * a + b * b)).reshape(N, -1).mean(axis=1)
        rho = m.mean() / v.mean()
        # ratio-estimator standard error over independent realizations
        se = (m - rho * v).std(ddof=1) / (math.sqrt(N) * v.mean())
        d = math.sqrt(0.5 * (1 + 0.5) * (hx * hx + hy * hy) + (1 - 0.5) * hx * hy)
        target = matern(d, 2.0)
        z = abs(rho - target) / se
        ok &= z <= 3.0
        lines.append(f"h=({hx},{hy}) {rho:.4f} vs {target:.4f} ({z:.2f} se)")
    report(5, ok, f"pooled site variance {pooled:.4f} (sites {site_var.min():.3f}..{site_var.max():.3f}), "
           f"max |site mean| {max_mean:.4f}; "
           + "; ".join(lines))
    assert ok


# configurations at Table 3 bin centers; std targets are the ML entries for those bins
C6_CONFIGS = [
    ((1.0445, 0.518, 2.089), 0.1309, 0.0824),
    ((1.94, 0.399, 1.297), 0.0792, 0.0688),
    ((1.343, 0.6365, 2.683), 0.1489, 0.0951),
]
C6_REPLICATES = 200


def _c6_stats(est, lam, theta, std_lam_ref, std_theta_ref):
    bias_l, bias_t = est[:, 1].mean() - lam, est[:, 2].mean() - theta
    sd_l, sd_t = est[:, 1].std(ddof=1), est[:, 2].std(ddof=1)
    good = (abs(bias_l) <= 0.1 and abs(bias_t) <= 0.1
            and 0.5 * std_lam_ref <= sd_l <= 2 * std_lam_ref
            and 0.5 * std_theta_ref <= sd_t <= 2 * std_theta_ref)
    text = (f"[{lam},{theta}] bias l {bias_l:+.4f} t {bias_t:+.4f}; "
            f"std l {sd_l:.4f}/{std_lam_ref} t {sd_t:.4f}/{std_theta_ref}")
    return good, text


@pytest.mark.slow
def test_c06_ml_recovery(report):
    # the criterion runs the profile-likelihood fit; the known-variance fit is printed as a diagnostic only
    ok, parts, diag = True, [], []
    known = SearchConfig(fixed_sigma2=1.0)
    for ci, ((alpha, lam, theta), std_theta_ref, std_lam_ref) in enumerate(C6_CONFIGS):
        p = AnisotropyParams(alpha, lam, theta, 1.0)
        fields = [simulate_stream(GridDomain(), p, MaternSpec(), 606, ci, r) for r in range(C6_REPLICATES)]
        est = np.array([fit_ml(f).params.triple for f in fields])
        good, text = _c6_stats(est, lam, theta, std_lam_ref, std_theta_ref)
        ok &= good
        parts.append(text)
        est_known = np.array([fit_ml(f, search=known).params.triple for f in fields])
        diag.append(_c6_stats(est_known, lam, theta, std_lam_ref, std_theta_ref)[1])
    report(6, ok, f"{C6_REPLICATES} reps each, profile ML: " + " | ".join(parts)
           + "  || diagnostic, sigma2 known: " + " | ".join(diag))
    assert ok


def test_c07a_overfit(report):
    samples = list(generate_dataset(training_param_grid(), base_seed=70,
                                    configs=training_param_grid().subsample(10, 70)))
    F = np.stack([s.field.values for s in samples])
    Y = np.array([s.label for s in samples])
    X = prepare_inputs("nv", F)
    art = train(X, Y, "nv", TrainingConfig(epochs=500, batch_size=10, seed=3))
    mae = float(np.abs(predict_normalized(art.spec, art.params, X) - art.normalizer.normalize(Y)).mean())
    report("7a", mae < 0.05, f"10-sample NV overfit: normalized MAE {mae:.4f} after 500 epochs")
    assert mae < 0.05


N_TRAIN = 40_000
N_HELDOUT = 5_000


@pytest.mark.slow
def test_c07bc_desk_training(report):
    g = training_param_grid()
    tr = list(generate_dataset(g, base_seed=71, configs=g.subsample(N_TRAIN, 71)))
    X = prepare_inputs("nv", np.stack([s.field.values for s in tr]))
    Y = np.array([s.label for s in tr])
    del tr
    v = validation_param_grid()
    ho = list(generate_dataset(v, base_seed=72, configs=v.subsample(N_HELDOUT, 72)))
    VX = prepare_inputs("nv", np.stack([s.field.values for s in ho]))
    VY = np.array([s.label for s in ho])

    art = train(X, Y, "nv", TrainingConfig(epochs=30, seed=7))
    losses = art.manifest["training"]["loss_history"]
    pred = art.normalizer.denormalize(predict_normalized(art.spec, art.params, VX))
    base = Y.mean(axis=0)  # constant-mean predictor fitted on the training labels
    ratios = [
        circular_alpha_error(VY[:, 0], pred[:, 0]).mean() / circular_alpha_error(VY[:, 0], base[0]).mean(),
        np.abs(pred[:, 1] - VY[:, 1]).mean() / np.abs(base[1] - VY[:, 1]).mean(),
        np.abs(pred[:, 2] - VY[:, 2]).mean() / np.abs(base[2] - VY[:, 2]).mean(),
    ]
    ok_b = all(r <= 0.7 for r in ratios)
    report("7b", ok_b, f"NV {N_TRAIN} samples x 30 epochs, {N_HELDOUT} held out: MAE/baseline "
           f"alpha {ratios[0]:.3f} lambda {ratios[1]:.3f} theta {ratios[2]:.3f} (need <= 0.700)")
    ok_c = losses[19] < losses[0]
    report("7c", ok_c, f"epoch-1 loss {losses[0]:.4f}, epoch-20 loss {losses[19]:.4f}, epoch-30 {losses[-1]:.4f}")
    assert ok_b and ok_c


def test_c08_variogram(report):
    ramp = variogram_map(FieldGrid(np.tile(np.arange(16.0), (16, 1))))
    hx = np.arange(-6, 7)
    ok_ramp = np.array_equal(ramp.values, np.tile(hx * hx / 2.0, (13, 1)))
    ok_const = not variogram_map(FieldGrid(np.full((16, 16), -2.5))).values.any()
    rng = np.random.default_rng(8)
    f = FieldGrid(rng.normal(size=(16, 16)))
    vm = variogram_map(f)
    ok_sym = np.array_equal(vm.values, vm.values[::-1, ::-1])
    ok_rot = variogram_map(rotate180(f)).values.tobytes() == vm.values.tobytes()
    sigma2, N = 2.0, 2000
    g, _ = variogram_maps(math.sqrt(sigma2) * rng.normal(size=(N, 16, 16)))
    off = np.ones((13, 13), dtype=bool)
    off[6, 6] = False
    mean, se = g.mean(axis=0)[off], g.std(axis=0, ddof=1)[off] / math.sqrt(N)
    zmax = float(np.max(np.abs(mean - sigma2) / se))
    ok_noise = zmax <= 4.0
    ok = ok_ramp and ok_const and ok_sym and ok_rot and ok_noise
    report(8, ok, f"ramp {ok_ramp}, constant {ok_const}, symmetry {ok_sym}, rotate180 {ok_rot}, "
           f"noise max |z| {zmax:.2f} over 168 lags (<= 4)")
    assert ok


@pytest.mark.slow
def test_c09_aic(report):
    rows = aic_experiment((0.25, 0.5, 0.75), replicates=100, seed=909)
    fr = aic_win_fractions(rows)
    f = [fr[0.25], fr[0.5], fr[0.75]]
    gaps = {lam: np.mean([r.aic_isotropic - r.aic_anisotropic for r in rows if r.lam == lam and not r.error])
            for lam in (0.25, 0.75)}
    failures = sum(bool(r.error) for r in rows)
    ok = f[0] >= 0.9 and f[0] >= f[1] >= f[2]
    report(9, ok, f"anisotropic preferred: {f[0]:.2f} / {f[1]:.2f} / {f[2]:.2f} at lambda 1/4, 1/2, 3/4; "
           f"mean AIC gap {gaps[0.25]:.1f} vs {gaps[0.75]:.1f}; fit failures {failures}")
    assert ok


def _cli(args, cwd):
    r = subprocess.run([sys.executable, "-m", "geoaniso", *map(str, args)], cwd=cwd, capture_output=True)
    assert r.returncode == 0, r.stderr.decode()
    return r.stdout


def test_c10_determinism(report, tmp_path):
    rng = np.random.default_rng(10)
    raster = rng.normal(size=(7, 7))
    raster[0, 0] = np.nan
    np.savetxt(tmp_path / "raster.csv", raster, delimiter=",")
    runs = {
        "simulate": (["simulate", "--alpha", 0.7854, "--lambda", 0.3, "--theta", 2, "--seed", 1, "--out", "{d}/f.csv"],
                     "f.csv"),
        "make-dataset": (["make-dataset", "--grid", "training", "--configs", 12, "--replicates", 2, "--seed", 4,
                          "--out", "{d}/data.bin"], "data.bin"),
        "varmap": (["varmap", "--field", "{d}/f.csv", "--out", "{d}/v.csv"], "v.csv"),
        "train-nv": (["train", "--dataset", "{d}/data.bin", "--kind", "nv", "--epochs", 2, "--batch-size", 8,
                      "--seed", 5, "--out", "{d}/nv.model"], "nv.model"),
        "train-nf": (["train", "--dataset", "{d}/data.bin", "--kind", "nf", "--epochs", 1, "--batch-size", 8,
                      "--seed", 5, "--out", "{d}/nf.model"], "nf.model"),
        "estimate-ml": (["estimate", "--method", "ml", "--field", "{d}/f.csv", "--out", "{d}/e_ml.csv"], "e_ml.csv"),
        "estimate-nv": (["estimate", "--method", "nv", "--model", "{d}/nv.model", "--field", "{d}/f.csv",
                         "--out", "{d}/e_nv.csv"], "e_nv.csv"),
        "estimate-nf": (["estimate", "--method", "nf", "--model", "{d}/nf.model", "--field", "{d}/f.csv",
                         "--out", "{d}/e_nf.csv"], "e_nf.csv"),
        "bench": (["bench", "--methods", "ML,NF,NV", "--nf-model", "{d}/nf.model", "--nv-model", "{d}/nv.model",
                   "--configs", 2, "--replicates", 1, "--seed", 6, "--summary", "{d}/summary.csv",
                   "--out", "{d}/records.csv"], "records.csv"),
        "bench-summary": (None, "summary.csv"),
        "aic": (["aic", "--lambdas", "0.25", "--replicates", 2, "--seed", 7, "--out", "{d}/aic.csv"], "aic.csv"),
        "scan": (["scan", "--raster", "{d}/raster.csv", "--method", "ml", "--window", 4, "--out", "{d}/scan.csv"],
                 "scan.csv"),
        "inspect-model": (["inspect-model", "{d}/nv.model"], None),
    }
    outputs = []
    for rep in (0, 1):
        d = tmp_path / f"run{rep}"
        d.mkdir()
        (d / "raster.csv").write_bytes((tmp_path / "raster.csv").read_bytes())
        got = {}
        for name, (argv, fname) in runs.items():
            if argv is not None:
                stdout = _cli([str(a).format(d=d) for a in argv], tmp_path)
            got[name] = (d / fname).read_bytes() if fname else stdout.replace(str(d).encode(), b"")
        outputs.append(got)
    differ = [k for k in runs if outputs[0][k] != outputs[1][k]]
    empty = [k for k in runs if not outputs[0][k]]
    ok = not differ and not empty
    report(10, ok, f"{len(runs)} outputs byte-identical across reruns" if ok else f"differ: {differ} empty: {empty}")
    assert ok
