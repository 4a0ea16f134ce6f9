"""Batch experiment runner.

Orchestrates simulate -> indicator -> extract -> oracle -> report over a
parsed config, or runs any single stage on the persisted artifacts of an
earlier run.  Every stage writes flat CSV (17 significant digits, one
header line) into the configured output directory, so runs diff cleanly
and identical config + seed reproduces identical bytes.

Failures surface as one machine-readable line on stderr,

    ERROR {"error": <class>, "code": <code>, "message": ..., "context": ...}

with exit status 2 for config problems and 3 for pipeline failures.
"""

import argparse
import csv
import json
import math
import os
import sys
from dataclasses import replace

import numpy as np

from . import analysis, fdtd, indicator, reflection
from .config import PIPELINES, SCHEMA, load_config
from .errors import (Divergent, EnclosureError, HypothesisViolated,
                     InvalidConfig, MissingArtifact)
from .geometry import icosphere_directions, signed_distance


def _path(cfg, name):
    return os.path.join(cfg.out_dir, name)


def _lanes(cfg):
    if cfg.pipeline == "both":
        return ("fdtd", "semianalytic")
    return (cfg.pipeline,)


def _fmt(v):
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return "%d" % int(v)
    if isinstance(v, (int, np.integer)):
        return "%d" % v
    return "%.17g" % float(v)


def _write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    print("wrote %s" % path)


def _read_rows(path, stage):
    if not os.path.exists(path):
        raise MissingArtifact("run %s first" % stage, path=str(path))
    with open(path) as fh:
        rdr = csv.reader(fh)
        header = next(rdr)
        return [dict(zip(header, row)) for row in rdr]


def _read_row(path, stage):
    return _read_rows(path, stage)[0]


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------

def stage_simulate(cfg):
    """Total and free runs on one grid, plus their difference."""
    if cfg.grid is None:
        raise InvalidConfig("simulate needs a [grid] block", block="grid")
    total = fdtd.run(cfg.obstacle, cfg.spec, cfg.grid,
                     strict=cfg.grid_strict)
    free = fdtd.run(None, cfg.spec, cfg.grid, nodes=total.nodes,
                    weights=total.weights, direction=total.direction,
                    strict=cfg.grid_strict)
    for rec, name in ((total, "record_total.npz"),
                      (free, "record_free.npz"),
                      (total - free, "record_scattered.npz")):
        rec.save(_path(cfg, name))
        print("wrote %s" % _path(cfg, name))


def _semianalytic_series(cfg, taus):
    signs = np.empty(len(taus))
    logs = np.empty(len(taus))
    for i, tau in enumerate(taus):
        val = analysis.normalized_indicator_prediction(
            cfg.obstacle, cfg.spec, float(tau))
        signs[i] = val.sign
        logs[i] = val.log
    return indicator.IndicatorSeries(tau_grid=np.asarray(taus, float),
                                     signs=signs, log_abs_I=logs)


def stage_indicator(cfg):
    taus = cfg.tau.grid()
    for lane in _lanes(cfg):
        if lane == "fdtd":
            src = _path(cfg, "record_scattered.npz")
            if not os.path.exists(src):
                raise MissingArtifact("run simulate first", path=src)
            series = indicator.indicator_series(
                fdtd.FieldRecord.load(src), cfg.spec, taus)
        else:
            series = _semianalytic_series(cfg, taus)
        out = _path(cfg, "indicator_%s.csv" % lane)
        indicator.write_series_csv(series, out)
        print("wrote %s" % out)


def stage_extract(cfg):
    """Distance fit plus second-order limits from the indicator series.

    The normalized sequence multiplies by e^{2 tau_t dist}, so a small
    distance error inflates the top of the window exponentially; the
    limit is therefore reported twice, normalized with the extracted
    distance (pure inversion chain) and with the geometric truth the
    config defines (isolates the limit's own fidelity).  A Divergent
    row is recorded as data, not a run failure.
    """
    d_true = signed_distance(cfg.obstacle, cfg.spec.p) - cfg.spec.eta
    for lane in _lanes(cfg):
        src = _path(cfg, "indicator_%s.csv" % lane)
        if not os.path.exists(src):
            raise MissingArtifact("run indicator first", path=src)
        series = indicator.read_series_csv(src)
        est = indicator.extract_distance(series, cfg.spec)
        _write_csv(
            _path(cfg, "distance_%s.csv" % lane),
            ("dist", "ci_lo", "ci_hi", "naive_dist", "prefactor_power",
             "residual_rms", "n_used", "positivity_onset", "tau_lo",
             "tau_hi", "T", "eps", "mu"),
            [(est.dist, est.slope_ci[0], est.slope_ci[1], est.naive_dist,
              est.prefactor_power, est.residual_rms, est.n_used,
              est.positivity_onset, est.tau_window[0], est.tau_window[1],
              cfg.spec.T, cfg.spec.eps, cfg.spec.mu)])
        rows = []
        for source, dist in (("extracted", est.dist),
                             ("geometry", d_true)):
            try:
                limit = indicator.second_order_limit(series, cfg.spec,
                                                     dist)
                status = "ok"
            except Divergent:
                limit, status = float("nan"), "divergent"
            rows.append((source, status, limit, dist,
                         series.tau_grid[0], series.tau_grid[-1],
                         len(series), cfg.spec.T, cfg.spec.eps,
                         cfg.spec.mu))
        _write_csv(
            _path(cfg, "second_order_%s.csv" % lane),
            ("dist_source", "status", "limit", "dist_used", "tau_lo",
             "tau_hi", "count", "T", "eps", "mu"), rows)


def _normalized_prediction_value(cfg, spec, tau, dist):
    """tau^2 e^{2 tau_t dist} 2J / f~^2, materialized."""
    pred = analysis.normalized_indicator_prediction(cfg.obstacle, spec,
                                                    tau)
    root = math.sqrt(spec.mu * spec.eps)
    ft = spec.f_tilde(tau)
    logv = (pred.log + 2.0 * math.log(tau) + 2.0 * root * dist * tau
            - 2.0 * math.log(abs(ft)))
    return pred.sign * math.exp(logv)


def _write_recovery(cfg, d_p, refl):
    if len(refl) != 1:
        raise HypothesisViolated(
            "curvature recovery needs a unique first reflector",
            n_reflectors=len(refl))
    nu = refl[0].nu
    a_dot_nu = float(np.dot(cfg.spec.a, nu))
    s1, s2 = cfg.recovery
    tau_hi = cfg.tau.hi
    tau_lo = 0.5 * tau_hi
    R = []
    for s in (s1, s2):
        spec_j = replace(cfg.spec, p=cfg.spec.p - s * nu, eta=s)
        dist_j = d_p - 2.0 * s
        # two-point Richardson removes the O(1/tau) correction
        R.append(2.0 * _normalized_prediction_value(cfg, spec_j, tau_hi,
                                                    dist_j)
                 - _normalized_prediction_value(cfg, spec_j, tau_lo,
                                                dist_j))
    res = analysis.recover_curvatures(tuple(R), (s1, s2), d_p, (s1, s2),
                                      a_dot_nu, cfg.spec.eps)
    _write_csv(
        _path(cfg, "recovery.csv"),
        ("s1", "s2", "R1", "R2", "X1", "X2", "lambda1", "lambda2",
         "H", "K", "residual", "a_dot_nu", "tau_lo", "tau_hi"),
        [(s1, s2, res.R[0], res.R[1], res.X[0], res.X[1],
          res.lambdas[0], res.lambdas[1], res.H, res.K, res.residual,
          a_dot_nu, tau_lo, tau_hi)])


def stage_oracle(cfg):
    d_p, refl = analysis.reflector_summaries(cfg.obstacle, cfg.spec)
    value = analysis.laplace_oracle(cfg.obstacle, cfg.spec)
    _write_csv(
        _path(cfg, "oracle.csv"),
        ("d_p", "dist", "eta", "laplace_oracle", "n_reflectors", "T",
         "eps", "mu"),
        [(d_p, d_p - cfg.spec.eta, cfg.spec.eta, value, len(refl),
          cfg.spec.T, cfg.spec.eps, cfg.spec.mu)])
    _write_csv(
        _path(cfg, "reflectors.csv"),
        ("qx", "qy", "qz", "nux", "nuy", "nuz", "det_diff",
         "directional"),
        [(r.q[0], r.q[1], r.q[2], r.nu[0], r.nu[1], r.nu[2],
          r.det_diff, r.directional) for r in refl])
    if cfg.recovery is not None:
        _write_recovery(cfg, d_p, refl)


def stage_report(cfg):
    """Side-by-side table; the limit row uses geometry normalization so
    the oracle column compares like against like."""
    orc = _read_row(_path(cfg, "oracle.csv"), "oracle")
    vals = {}
    for lane in _lanes(cfg):
        dist = _read_row(_path(cfg, "distance_%s.csv" % lane), "extract")
        sols = _read_rows(_path(cfg, "second_order_%s.csv" % lane),
                          "extract")
        geo = next(r for r in sols if r["dist_source"] == "geometry")
        vals[lane] = (float(dist["dist"]), float(geo["limit"]))
    nan = float("nan")
    rows = []
    for name, idx, key in (("dist", 0, "dist"),
                           ("second_order_limit", 1, "laplace_oracle")):
        f = vals.get("fdtd", (nan, nan))[idx]
        s = vals.get("semianalytic", (nan, nan))[idx]
        ratio = f / s if "fdtd" in vals and "semianalytic" in vals \
            else nan
        rows.append((name, f, s, float(orc[key]), ratio))
    _write_csv(_path(cfg, "comparison.csv"),
               ("quantity", "fdtd", "semianalytic", "oracle",
                "ratio_fdtd_semianalytic"), rows)


def stage_reflectcheck(cfg):
    rc = cfg.reflectcheck or \
        {k: d for k, (_, d) in SCHEMA["reflectcheck"].items()}
    field = reflection.probe_reflected(cfg.obstacle, cfg.spec, rc["tau"])
    samples = reflection.surface_samples(cfg.obstacle, rc["samples"],
                                         seed=rc["seed"])
    rows = []
    for q in samples:
        dev = reflection.check_tangential_trace(field, [q])
        rows.append((q, "tangential-trace", dev, float("nan")))
    for q in samples:
        rep = reflection.check_curl_trace(field, [q], rc["h_fd"])
        rows.append((q, "curl-trace", rep.max_rel, rep.order))
    out = _path(cfg, "reflection_report.csv")
    reflection.write_trace_report_csv(out, rows)
    print("wrote %s" % out)
    _write_csv(_path(cfg, "reflection_meta.csv"),
               ("tau", "h_fd", "samples", "seed", "delta0"),
               [(rc["tau"], rc["h_fd"], rc["samples"], rc["seed"],
                 field.delta0)])


def stage_probe(cfg):
    dirs = icosphere_directions(cfg.probe["level"])
    mask = analysis.direction_sweep(cfg.obstacle.sdf, cfg.spec.p, dirs,
                                    s=cfg.probe["s"],
                                    tol=cfg.probe["tol"])
    _write_csv(_path(cfg, "sweep.csv"),
               ("omega0", "omega1", "omega2", "hit", "s", "tol"),
               [(d[0], d[1], d[2], bool(m), cfg.probe["s"],
                 cfg.probe["tol"]) for d, m in zip(dirs, mask)])


STAGES = {
    "simulate": stage_simulate,
    "indicator": stage_indicator,
    "extract": stage_extract,
    "oracle": stage_oracle,
    "report": stage_report,
    "reflectcheck": stage_reflectcheck,
    "probe": stage_probe,
}


def run_experiment(cfg):
    """Full orchestration for the configured pipeline."""
    os.makedirs(cfg.out_dir, exist_ok=True)
    if cfg.pipeline in ("fdtd", "both"):
        stage_simulate(cfg)
    stage_indicator(cfg)
    stage_extract(cfg)
    stage_oracle(cfg)
    stage_report(cfg)
    if cfg.reflectcheck is not None:
        stage_reflectcheck(cfg)


def _emit_error(e):
    block = {"error": type(e).__name__,
             "code": getattr(e, "code", "error"),
             "message": str(e),
             "context": getattr(e, "context", {})}
    print("ERROR " + json.dumps(block, default=str, sort_keys=True),
          file=sys.stderr)


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="emprobe",
        description="Obstacle probing experiments: FDTD or semi-analytic "
                    "indicator pipeline with CSV artifacts.")
    parser.add_argument("--config", required=True,
                        help="experiment config (INI blocks)")
    parser.add_argument("--stage", choices=sorted(STAGES),
                        help="run one stage instead of the full pipeline")
    parser.add_argument("--out", help="override [output] dir")
    parser.add_argument("--tau-min", type=float,
                        help="override [tau] min")
    parser.add_argument("--tau-max", type=float,
                        help="override [tau] max")
    parser.add_argument("--tau-count", type=int,
                        help="override [tau] count")
    parser.add_argument("--pipeline", choices=PIPELINES,
                        help="override [pipeline] mode")
    args = parser.parse_args(argv)

    overrides = {}
    if args.out is not None:
        overrides["output.dir"] = args.out
    if args.tau_min is not None:
        overrides["tau.min"] = repr(args.tau_min)
    if args.tau_max is not None:
        overrides["tau.max"] = repr(args.tau_max)
    if args.tau_count is not None:
        overrides["tau.count"] = str(args.tau_count)
    if args.pipeline is not None:
        overrides["pipeline.mode"] = args.pipeline

    try:
        cfg = load_config(args.config, overrides)
        os.makedirs(cfg.out_dir, exist_ok=True)
        if args.stage is None:
            run_experiment(cfg)
        else:
            STAGES[args.stage](cfg)
    except InvalidConfig as e:
        _emit_error(e)
        return 2
    except EnclosureError as e:
        _emit_error(e)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
