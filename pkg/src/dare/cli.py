"""Command-line front end.

Subcommands: simulate, fit, coverage, combine, report. Options resolve in
three layers: built-in defaults, then a JSON config file (--config), then
explicit command-line flags. The fully resolved config and the sha256 of
every input file are echoed into each artifact, so re-running a command with
identical config and inputs yields byte-identical outputs. All files are
written atomically (temp file + rename). Validation and convergence failures
exit non-zero with a one-line JSON error on stderr.
"""

import argparse
import csv
import hashlib
import io
import json
import os
import sys
import tempfile

import numpy as np

from .data import (DataError, DoseResponseSpec, Kernel, PriorSpec,
                   default_priors, load_csv)
from .glm import fit_glm_map
from .inference import (fit_from_dict, fit_map, fit_to_dict, predict_incidence,
                        summarize)
from .shrinkage import (ShrinkagePlan, build_L, joint_to_dict, pathogen_summaries,
                        select_nu, stack_fits, tilt_posterior)
from .simulate import SimConfig, run_coverage, simulate_dataset

SUMMARY_COLUMNS = ("parameter", "rate_ratio", "ci_low", "ci_high", "prob_rr_gt_1", "flag")


def _sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _atomic_write(path, data):
    if isinstance(data, str):
        data = data.encode("utf-8")
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _json_text(obj):
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _csv_text(columns, rows):
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\r\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    return buf.getvalue()


def _emit(outdir, name, text):
    os.makedirs(outdir, exist_ok=True)
    path = os.path.join(outdir, name)
    _atomic_write(path, text)
    return path


def _warn(kind, message):
    print(json.dumps({"warning": kind, "message": message}, sort_keys=True),
          file=sys.stderr)


def _load_config_file(path):
    if path is None:
        return {}
    with open(path) as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise ValueError("config file must hold a JSON object")
    return cfg


def _opt(args, cfg, name, default):
    """Flag > config-file key > default."""
    v = getattr(args, name, None)
    if v is not None:
        return v
    if name in cfg:
        return cfg[name]
    return default


def _resolve_seed(args, cfg):
    v = _opt(args, cfg, "seed", None)
    if v is not None:
        return int(v)
    env = os.environ.get("DARE_SEED")
    if env is not None:
        return int(env)
    return 0


def _parse_float_list(text, flag):
    try:
        vals = [float(s) for s in str(text).split(",") if s.strip() != ""]
    except ValueError:
        raise ValueError("%s: expected comma-separated numbers, got %r" % (flag, text))
    if not vals:
        raise ValueError("%s: empty list" % flag)
    return vals


def _summary_rows(rows):
    return [{
        "parameter": r.label,
        "rate_ratio": "%.17g" % r.rate_ratio_point,
        "ci_low": "%.17g" % r.ci_low,
        "ci_high": "%.17g" % r.ci_high,
        "prob_rr_gt_1": "%.17g" % r.prob_rr_gt_1,
        "flag": r.flag,
    } for r in rows]


def _print_summary_table(rows):
    print("%-14s %12s %12s %12s %10s  %s"
          % ("parameter", "rate_ratio", "ci_low", "ci_high", "P(RR>1)", "flag"))
    for r in rows:
        print("%-14s %12.4g %12.4g %12.4g %10.4f  %s"
              % (r.label, r.rate_ratio_point, r.ci_low, r.ci_high,
                 r.prob_rr_gt_1, r.flag))


def _sim_config(args, cfg, seed):
    kw = {"seed": seed}
    kernel = _opt(args, cfg, "kernel", None)
    if kernel is not None:
        kw["dgp_kernel"] = Kernel(kernel)
    for key in ("n_subjects", "sigma", "theta1"):
        if key in cfg:
            kw[key] = cfg[key]
    for key in ("visit_days", "true_beta"):
        if key in cfg:
            kw[key] = tuple(cfg[key])
    return SimConfig(**kw)


def cmd_simulate(args, cfg):
    seed = _resolve_seed(args, cfg)
    config = _sim_config(args, cfg, seed)
    outdir = _opt(args, cfg, "output_dir", ".")
    dataset, truth = simulate_dataset(config)

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(["subject_id", "t", "tau", "y"] + list(dataset.covariate_names[1:]))
    for r in dataset.rows:
        writer.writerow([r.subject_id, r.interval_index, "%.17g" % r.tau, r.outcome]
                        + ["%.17g" % c for c in r.covariates[1:]])
    csv_path = _emit(outdir, "dataset.csv", buf.getvalue())
    _emit(outdir, "truth.json", _json_text({
        "config": truth,
        "dataset": "dataset.csv",
        "dataset_sha256": _sha256_file(csv_path),
        "truth": truth,
    }))
    print("wrote %s (%d rows, %d subjects)"
          % (csv_path, len(dataset.rows), dataset.n_subjects))
    return 0


def _fit_one(dataset, kernel, priors, n_q, seed):
    if kernel == "cloglog-glm":
        return fit_glm_map(dataset, beta_priors=priors, seed=seed)
    return fit_map(dataset, DoseResponseSpec(kernel=Kernel(kernel)),
                   priors=priors, n_q=n_q, seed=seed)


def _priors_override(cfg, n_covariates):
    if "priors" not in cfg:
        return None
    d = dict(cfg["priors"])
    if "beta_sd" not in d:
        d["beta_sd"] = list(default_priors(n_covariates).beta_sd)
    return PriorSpec.from_dict(d)


def cmd_fit(args, cfg):
    if args.input is None:
        raise ValueError("fit requires --input <dataset.csv>")
    seed = _resolve_seed(args, cfg)
    kernel = _opt(args, cfg, "kernel", Kernel.BETA_POISSON.value)
    n_q = int(_opt(args, cfg, "nq", 50))
    level = float(_opt(args, cfg, "level", 0.95))
    outdir = _opt(args, cfg, "output_dir", ".")

    dataset = load_csv(args.input)
    priors = _priors_override(cfg, len(dataset.covariate_names))
    fit = _fit_one(dataset, kernel, priors, n_q, seed)
    if not fit.converged:
        raise RuntimeError("fit did not converge: %s" % json.dumps(fit.diagnostics))
    rows = summarize(fit, level=level)

    resolved = {"input": args.input, "kernel": kernel, "nq": n_q, "seed": seed,
                "level": level,
                "priors": priors.to_dict() if priors is not None else None}
    provenance = {"config": resolved, "inputs": {args.input: _sha256_file(args.input)}}
    _emit(outdir, "fit.json", _json_text(dict(provenance, fit=fit_to_dict(fit))))
    _emit(outdir, "summary.csv", _csv_text(SUMMARY_COLUMNS, _summary_rows(rows)))
    _print_summary_table(rows)
    return 0


def cmd_coverage(args, cfg):
    seed = _resolve_seed(args, cfg)
    config = _sim_config(args, cfg, seed)
    n_replicates = int(_opt(args, cfg, "replicates", 200))
    workers = int(_opt(args, cfg, "workers", 1))
    level = float(_opt(args, cfg, "level", 0.95))
    n_q = int(_opt(args, cfg, "nq", 50))
    models = tuple(cfg.get("models", ("dare", "glm")))
    outdir = _opt(args, cfg, "output_dir", ".")

    report = run_coverage(config, n_replicates, level=level, models=models,
                          workers=workers, n_q=n_q)
    rows = [{k: ("%.17g" % v if isinstance(v, float) else v) for k, v in row.items()}
            for row in report.rows]
    path = _emit(outdir, "coverage.csv",
                 _csv_text(list(report.rows[0].keys()), rows))
    _emit(outdir, "coverage.meta.json", _json_text({
        "config": dict(report.config, replicates=n_replicates, level=level,
                       models=list(models), nq=n_q, workers=workers),
        "inputs": {},
    }))
    print("wrote %s (%d replicates)" % (path, n_replicates))
    return 0


def _load_plan(manifest_path):
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    pathogens = manifest.get("pathogens")
    if not pathogens:
        raise ValueError("manifest needs a non-empty 'pathogens' list")
    labels = [p["label"] for p in pathogens]
    shrink = manifest.get("shrink", {})
    return pathogens, labels, shrink


def cmd_combine(args, cfg):
    if args.manifest is None:
        raise ValueError("combine requires --manifest <plan.json>")
    seed = _resolve_seed(args, cfg)
    kernel = _opt(args, cfg, "kernel", Kernel.BETA_POISSON.value)
    n_q = int(_opt(args, cfg, "nq", 50))
    level = float(_opt(args, cfg, "level", 0.95))
    outdir = _opt(args, cfg, "output_dir", ".")
    nu_grid = None
    raw_grid = _opt(args, cfg, "nu_grid", None)
    if raw_grid is not None:
        if isinstance(raw_grid, str):
            nu_grid = _parse_float_list(raw_grid, "--nu-grid")
        else:
            nu_grid = [float(v) for v in raw_grid]

    pathogens, labels, shrink = _load_plan(args.manifest)
    base = os.path.dirname(os.path.abspath(args.manifest))
    inputs = {args.manifest: _sha256_file(args.manifest)}
    fits = []
    cov_names = None
    for entry in pathogens:
        fit = None
        dataset = None
        if "dataset" in entry:
            dpath = os.path.join(base, entry["dataset"])
            dataset = load_csv(dpath)
            inputs[entry["dataset"]] = _sha256_file(dpath)
        if "fit" in entry:
            fpath = os.path.join(base, entry["fit"])
            with open(fpath) as fh:
                fit = fit_from_dict(json.load(fh)["fit"])
            inputs[entry["fit"]] = _sha256_file(fpath)
            if dataset is not None and fit.model_meta.get("dataset_digest") != dataset.digest():
                _warn("digest_mismatch",
                      "fit artifact %s was not computed from dataset %s"
                      % (entry["fit"], entry["dataset"]))
        if fit is None:
            if dataset is None:
                raise ValueError("pathogen %r needs a 'dataset' or 'fit' entry"
                                 % entry["label"])
            priors = _priors_override(cfg, len(dataset.covariate_names))
            fit = _fit_one(dataset, kernel, priors, n_q, seed)
            if not fit.converged:
                raise RuntimeError("fit for pathogen %r did not converge" % entry["label"])
        fits.append(fit)
        names = tuple(fit.model_meta["covariates"])
        if cov_names is None:
            cov_names = names
        elif names != cov_names:
            raise ValueError("pathogen %r has covariates %r, expected %r"
                             % (entry["label"], names, cov_names))

    n_dr = 1 if fits[0].model_meta["kernel"] == Kernel.BETA_POISSON.value else 0
    pos = {lab: i + 1 for i, lab in enumerate(labels)}
    shrink_sets = []
    for name in cov_names:
        members = shrink.get(name, [])
        unknown = [m for m in members if m not in pos]
        if unknown:
            raise ValueError("shrink set for %r names unknown pathogens %r" % (name, unknown))
        shrink_sets.append(frozenset(pos[m] for m in members))
    plan = ShrinkagePlan(K=len(labels), J=len(cov_names), n_dr=n_dr,
                         shrink_sets=tuple(shrink_sets), pathogen_labels=tuple(labels))

    joint = stack_fits(fits, plan)
    L = build_L(plan)
    nu_star, scores = select_nu(joint, L, grid=nu_grid)
    tilted = tilt_posterior(joint, L, nu_star)

    resolved = {"manifest": args.manifest, "kernel": kernel, "nq": n_q, "seed": seed,
                "level": level,
                "nu_grid": None if nu_grid is None else [float(v) for v in nu_grid]}
    provenance = {"config": resolved, "inputs": inputs}
    _emit(outdir, "joint.json", _json_text(dict(
        provenance, joint=joint_to_dict(tilted), nu=nu_star,
        subspace_columns=int(L.shape[1]),
    )))
    _emit(outdir, "scores.csv", _csv_text(
        ("nu", "score"),
        [{"nu": "%.17g" % nu, "score": "%.17g" % sc} for nu, sc in scores]))
    for lab, rows in pathogen_summaries(tilted, plan, level=level).items():
        safe = "".join(c if c.isalnum() or c in "-_" else "_" for c in lab)
        _emit(outdir, "summary_%s.csv" % safe,
              _csv_text(SUMMARY_COLUMNS, _summary_rows(rows)))
    print("L: %d rows x %d subspace columns; selected nu = %g"
          % (L.shape[0], L.shape[1], nu_star))
    return 0


def cmd_report(args, cfg):
    if args.input is None:
        raise ValueError("report requires --input <fit.json>")
    if args.profile is None:
        raise ValueError("report requires --profile <profile.json>")
    seed = _resolve_seed(args, cfg)
    level = float(_opt(args, cfg, "level", 0.95))
    draws = int(_opt(args, cfg, "draws", 4000))
    outdir = _opt(args, cfg, "output_dir", ".")
    schedule_text = _opt(args, cfg, "schedule", "1,3,5,7,14")

    with open(args.input) as fh:
        fit = fit_from_dict(json.load(fh)["fit"])
    with open(args.profile) as fh:
        profile = json.load(fh)
    days = _parse_float_list(schedule_text, "--schedule")
    if any(d <= 0 for d in days) or any(b <= a for a, b in zip(days, days[1:])):
        raise ValueError("--schedule: visit days must be positive and strictly increasing")
    taus = np.diff(np.concatenate([[0.0], days]))

    names = fit.model_meta["covariates"]
    x = []
    for name in names:
        if name == "intercept":
            x.append(1.0)
        elif name in profile:
            x.append(float(profile[name]))
        else:
            raise ValueError("profile is missing covariate %r" % name)
    extra = sorted(set(profile) - set(names))
    if extra:
        _warn("unused_profile_keys", "profile keys not in the model: %r" % extra)

    rows = []
    for i in range(len(days)):
        med, lo, hi = predict_incidence(fit, x, taus[:i + 1], draws=draws,
                                        seed=seed, level=level)
        rows.append({"horizon_day": "%.17g" % days[i],
                     "incidence": "%.17g" % med,
                     "ci_low": "%.17g" % lo,
                     "ci_high": "%.17g" % hi})
    path = _emit(outdir, "incidence.csv",
                 _csv_text(("horizon_day", "incidence", "ci_low", "ci_high"), rows))
    _emit(outdir, "incidence.meta.json", _json_text({
        "config": {"input": args.input, "profile": args.profile, "schedule": days,
                   "draws": draws, "seed": seed, "level": level},
        "inputs": {args.input: _sha256_file(args.input),
                   args.profile: _sha256_file(args.profile)},
    }))
    print("wrote %s (%d horizons)" % (path, len(rows)))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="dare",
        description="Dose accrual risk estimation from longitudinal infection data")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, helptext):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--input", help="input dataset CSV or fit JSON")
        p.add_argument("--output-dir", dest="output_dir", help="artifact directory")
        p.add_argument("--kernel", choices=[Kernel.EXPONENTIAL.value,
                                            Kernel.BETA_POISSON.value,
                                            "cloglog-glm"])
        p.add_argument("--nq", type=int, help="quadrature node count")
        p.add_argument("--seed", type=int, help="RNG seed (falls back to DARE_SEED)")
        p.add_argument("--level", type=float, help="credible level, default 0.95")
        p.add_argument("--replicates", type=int)
        p.add_argument("--workers", type=int)
        p.add_argument("--config", help="JSON config file; flags override its values")
        p.add_argument("--manifest", help="multi-pathogen shrinkage plan JSON")
        p.add_argument("--profile", help="covariate profile JSON")
        p.add_argument("--schedule", help="comma-separated visit days")
        p.add_argument("--draws", type=int, help="posterior draws for prediction")
        p.add_argument("--nu-grid", dest="nu_grid", help="comma-separated nu grid")
        p.set_defaults(func=func)
        return p

    add("simulate", cmd_simulate, "draw a synthetic dataset")
    add("fit", cmd_fit, "MAP + Laplace fit on a dataset CSV")
    add("coverage", cmd_coverage, "credible-interval coverage study")
    add("combine", cmd_combine, "multi-pathogen shrinkage")
    add("report", cmd_report, "incidence proportion over a visit schedule")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = _load_config_file(args.config)
        return args.func(args, cfg)
    except DataError as err:
        print(json.dumps({"error": "validation", "details": err.errors},
                         sort_keys=True), file=sys.stderr)
        return 2
    except RuntimeError as err:
        print(json.dumps({"error": "convergence", "message": str(err)},
                         sort_keys=True), file=sys.stderr)
        return 3
    except (ValueError, OSError) as err:
        print(json.dumps({"error": "config", "message": str(err)},
                         sort_keys=True), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
