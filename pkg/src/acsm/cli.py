"""Command-line driver: sample, moments, poles, criteria, verify, reproduce."""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from . import dynamics as dy
from . import fpu_model as fm
from . import gibbs_sampler as gs
from .criteria import criteria_report
from .experiments import SCALES, loglog_slope, pole_study, sech_overlay
from .moment_engine import JET_ORDER_CAP, estimate_moments, read_moment_file, write_moment_file
from .observables import make_observable
from .stieltjes import (
    MomentGateError,
    approximants_up_to,
    default_precision,
    isolation_diagnostic,
    pole_rows,
    read_pole_csv,
    write_pole_csv,
)

EXIT_OK, EXIT_CONFIG, EXIT_GATE, EXIT_INTEGRATOR = 0, 2, 3, 4

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["model"],
    "additionalProperties": False,
    "properties": {
        "model": {
            "type": "object",
            "required": ["n_particles", "temperature"],
            "additionalProperties": False,
            "properties": {
                "n_particles": {"type": "integer", "minimum": 1},
                "alpha": {"type": "number"},
                "beta": {"type": "number", "minimum": 0},
                "temperature": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "n_samples": {"type": "integer", "minimum": 1},
        "observable": {"enum": ["Etilde", "Ktilde", "E", "K", "H", "custom-polynomial"]},
        "expression": {"type": "string"},
        "max_order": {"type": "integer", "minimum": 0, "maximum": JET_ORDER_CAP},
        "precision_bits": {"type": "integer", "minimum": 64},
        "jackknife_blocks": {"type": "integer", "minimum": 2},
        "output_dir": {"type": "string"},
        "threads": {"type": "integer", "minimum": 1},
        "verify": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_initial": {"type": "integer", "minimum": 40},
                "t_grid": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
                "t_max": {"type": "number", "exclusiveMinimum": 0},
                "n_times": {"type": "integer", "minimum": 2},
                "dt": {"type": "number", "exclusiveMinimum": 0},
                "orders": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
                "scheme": {"enum": ["verlet", "yoshida4"]},
                "drift_bound": {"type": "number", "exclusiveMinimum": 0},
                "pair": {
                    "type": "object",
                    "required": ["f", "g"],
                    "properties": {"f": {"type": "string"}, "g": {"type": "string"}},
                },
            },
        },
    },
}

DEFAULTS = {
    "seed": 1,
    "n_samples": 100_000,
    "observable": "Etilde",
    "max_order": 7,
    "precision_bits": 512,
    "jackknife_blocks": 20,
    "output_dir": ".",
    "threads": 1,
}
VERIFY_DEFAULTS = {"n_initial": 2000, "t_max": 2.0, "n_times": 21, "orders": [0, 1, 2, 3],
                   "scheme": "verlet", "drift_bound": 1e-6}


class ConfigError(ValueError):
    pass


def load_config(path) -> dict:
    text = Path(path).read_text()
    try:
        if str(path).endswith((".yaml", ".yml")):
            import yaml

            raw = yaml.safe_load(text)
        else:
            raw = json.loads(text)
    except Exception as exc:  # parse errors from either loader
        raise ConfigError(f"{path}: cannot parse config: {exc}") from exc
    return validate_config(raw)


def validate_config(raw) -> dict:
    try:
        jsonschema.validate(raw, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"invalid config: {exc.message}") from exc
    cfg = {**DEFAULTS, **raw}
    cfg["model"] = {"alpha": 0.25, "beta": 0.25, **raw["model"]}
    if "verify" in raw:
        cfg["verify"] = {**VERIFY_DEFAULTS, **raw["verify"]}
    if cfg["observable"] == "custom-polynomial" and not cfg.get("expression"):
        raise ConfigError("custom-polynomial observable needs an 'expression'")
    try:
        fm.FpuParams(**cfg["model"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


# settings that do not change any result stay out of the digest
_DIGEST_EXCLUDED = ("output_dir", "threads")


def config_digest(cfg: dict) -> str:
    body = {k: v for k, v in cfg.items() if k not in _DIGEST_EXCLUDED}
    return hashlib.sha256(json.dumps(body, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def _stamp(cfg: dict | None) -> dict:
    return {"config_digest": config_digest(cfg) if cfg is not None else None, "code_version": __version__}


def _stamp_line(stamp: dict) -> str:
    return f"config_digest={stamp['config_digest']} code_version={stamp['code_version']}"


def _apply_overrides(cfg, args):
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = args.seed
    if getattr(args, "out", None) is not None:
        cfg["output_dir"] = args.out
    if getattr(args, "threads", None) is not None:
        cfg["threads"] = args.threads
    if getattr(args, "precision", None) is not None:
        cfg["precision_bits"] = args.precision
    return validate_config(cfg)


def _outdir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _model(cfg):
    return fm.build_chain(fm.FpuParams(**cfg["model"]))


# -- commands ------------------------------------------------------------------------

def cmd_sample(cfg) -> Path:
    model = _model(cfg)
    sample = gs.sample_set(model, cfg["n_samples"], cfg["seed"])
    path = _outdir(cfg["output_dir"]) / "sample.acsm"
    gs.write_sample_file(path, sample, _stamp(cfg))
    h = fm.hamiltonian(model, sample.q, sample.p)
    print(f"wrote {path} ({len(sample)} points, N={model.n}, T={model.params.temperature:g})")
    print(f"  mean H/N = {h.mean() / model.n:.6g}  mean p^2 = {np.mean(sample.p**2):.6g}  digest {sample.digest()[:16]}")
    return path


def _observable(cfg, model, sample):
    proj = gs.estimate_projection(model, sample) if cfg["observable"] in ("Etilde", "Ktilde") else None
    return make_observable(cfg["observable"], model, proj, cfg.get("expression")), proj


def cmd_moments(cfg, sample_path=None) -> Path:
    model = _model(cfg)
    if sample_path:
        sample, header = gs.read_sample_file(sample_path)
        if sample.params != model.params:
            raise ConfigError(f"{sample_path}: sample parameters {header['params']} differ from the config")
    else:
        sample = gs.sample_set(model, cfg["n_samples"], cfg["seed"])
    obs, proj = _observable(cfg, model, sample)
    m = estimate_moments(model, sample, obs, cfg["max_order"], cfg["jackknife_blocks"], threads=cfg["threads"])
    m.meta.update(_stamp(cfg))
    if proj is not None:
        m.meta["projection"] = proj.to_dict()
    path = _outdir(cfg["output_dir"]) / "moments.json"
    write_moment_file(path, m)
    print(f"wrote {path}: c_0..c_{m.max_n} for {m.observable_id}")
    for n, (c, e) in enumerate(zip(m.c, m.stderr)):
        print(f"  c_{n} = {c:.10g} +- {e:.3g}")
    return path


def cmd_poles(moment_path, out, order=None, precision=None, all_orders=False) -> int:
    m = read_moment_file(moment_path)
    order = order or len(m.c) // 2
    if 2 * order > len(m.c):
        raise ConfigError(f"order {order} needs c_0..c_{2 * order - 1}; file has {len(m.c)} coefficients")
    aps, err = approximants_up_to(m, order, precision or default_precision())
    stamp = {"config_digest": m.meta.get("config_digest"), "code_version": __version__}
    outdir = _outdir(out)
    # lower orders are always computed for the isolation diagnostic
    written = aps if all_orders else [a for a in aps if a.order == order]
    write_pole_csv(outdir / "poles.csv", pole_rows(written), _stamp_line(stamp))
    report = {"max_valid_order": len(aps), **stamp}
    if aps:
        iso = isolation_diagnostic(aps) if len(aps) > 1 or aps[0].order == 1 else None
        if iso is not None:
            report["isolation"] = iso.to_dict()
    if err is not None:
        report["gate"] = {"failing_order": err.failing_order, "max_valid_order": err.max_order, "message": str(err)}
    (outdir / "isolation.json").write_text(json.dumps(report, indent=2, default=float))
    print(f"wrote {outdir / 'poles.csv'} ({sum(a.order for a in written)} rows)")
    if err is not None:
        print(f"moments cease to be reliable at order {err.failing_order}: {err}; "
              f"maximum valid order {err.max_order}", file=sys.stderr)
        return EXIT_GATE
    if aps and "isolation" in report:
        print(f"isolation diagnostic: {report['isolation']['verdict']}")
    return EXIT_OK


def cmd_criteria(path, out, precision=None) -> Path:
    path = Path(path)
    prec = precision or default_precision()
    text = path.read_text()
    if text.lstrip().startswith("{"):
        try:
            m = read_moment_file(path)
        except (jsonschema.ValidationError, ValueError) as exc:
            raise ConfigError(f"{path}: {getattr(exc, 'message', exc)}") from exc
        aps, _ = approximants_up_to(m, len(m.c) // 2, prec)
        rep = criteria_report(m, aps[-1] if aps else None, precision_bits=prec)
        rep["input"] = {"kind": "moments", "file": str(path), "approximant_order": aps[-1].order if aps else 0}
        digest = m.meta.get("config_digest")
    else:
        try:
            aps = read_pole_csv(path)
        except (ValueError, KeyError, csv.Error) as exc:
            raise ConfigError(str(exc)) from exc
        if not aps:
            raise ConfigError(f"{path}: no poles")
        rep = criteria_report(None, aps[-1], precision_bits=prec)
        rep["input"] = {"kind": "poles", "file": str(path), "approximant_order": aps[-1].order}
        digest = None
    rep.update({"config_digest": digest, "code_version": __version__})
    dest = _outdir(out) / "criteria.json"
    dest.write_text(json.dumps(rep, indent=2, default=float))
    for key in ("akhiezer_krein", "root_test", "hausdorff"):
        if key in rep:
            v = rep[key].get("verdict") or rep[key].get("verdicts")
            print(f"{key}: {v}")
    if "apriori" in rep:
        print(f"apriori: {'pass' if rep['apriori']['passed'] else 'FAIL'}")
    print(f"wrote {dest}")
    return dest


def _verify_grid(vcfg, model):
    dt0 = vcfg.get("dt")
    if "t_grid" in vcfg:
        t = np.array(vcfg["t_grid"], dtype=float)
        dt = dt0 if dt0 is not None else dy.default_dt(model)
        return t, dt
    t = np.linspace(0.0, vcfg["t_max"], vcfg["n_times"])
    spacing = t[1] - t[0]
    if dt0 is not None:
        return t, dt0
    # largest step not above the default that divides the grid spacing exactly
    steps = int(np.ceil(spacing / dy.default_dt(model)))
    return np.arange(vcfg["n_times"]) * steps * (spacing / steps), spacing / steps


def cmd_verify(cfg) -> int:
    if "verify" not in cfg:
        cfg = validate_config({**cfg, "verify": {}})
    vcfg = cfg["verify"]
    model = _model(cfg)
    sample = gs.sample_set(model, cfg["n_samples"], cfg["seed"])
    obs, _ = _observable(cfg, model, sample)
    orders = vcfg["orders"]
    m = estimate_moments(model, sample, obs, max(orders), cfg["jackknife_blocks"], threads=cfg["threads"])
    init = sample.subset(np.arange(min(vcfg["n_initial"], len(sample))))
    t, dt = _verify_grid(vcfg, model)
    emp = dy.empirical_autocorrelation(model, init, obs, t, dt, cfg["jackknife_blocks"],
                                       vcfg["drift_bound"], vcfg["scheme"])
    rep = dy.truncation_bounds_check(emp, m, orders)
    stamp = _stamp(cfg)
    outdir = _outdir(cfg["output_dir"])
    dy.write_correlation_csv(outdir / "correlation.csv", emp, rep.sums, _stamp_line(stamp))
    report = {"dt": dt, "ensemble_size": emp.ensemble_size, "truncation": rep.to_dict(), **stamp}
    if "pair" in vcfg:
        f = make_observable(vcfg["pair"]["f"], model, gs.estimate_projection(model, sample))
        g = make_observable(vcfg["pair"]["g"], model, gs.estimate_projection(model, sample))
        report["correlated"] = dy.correlated_variables_check(model, init, f, g, t, dt, cfg["jackknife_blocks"],
                                                             drift_bound=vcfg["drift_bound"],
                                                             scheme=vcfg["scheme"]).to_dict()
    (outdir / "verify.json").write_text(json.dumps(report, indent=2, default=float))
    print(f"wrote {outdir / 'correlation.csv'}; sandwich {'holds' if rep.all_hold else 'FAILS'} up to t*={rep.t_star:g}")
    return EXIT_OK


FIGURES = ("fig1", "fig2", "fig3", "fig4", "fig5")


def cmd_reproduce(fig, scale="desk", out=".", seed=1, threads=1, precision=None, n_samples=None) -> Path:
    if fig not in FIGURES:
        raise ConfigError(f"unknown figure id {fig!r}; choose from {', '.join(FIGURES)}")
    sc = dict(SCALES[scale])
    if n_samples:
        sc["n_samples"] = n_samples
    prec = precision or default_precision()
    cfg = {"figure": fig, "scale": scale, "seed": seed, "precision_bits": prec, **sc}
    stamp = _stamp(cfg)
    dest = _outdir(out) / f"{fig}.csv"
    if fig == "fig5":
        temps, obs, order = [1e-5], "Etilde", 4
    else:
        temps = sc["temperatures"]
        obs = "Etilde" if fig in ("fig1", "fig2") else "Ktilde"
        order = 4 if obs == "Etilde" else 3
    study = pole_study(temps, (obs,), sc["n_particles"], n_samples=sc["n_samples"], seed=seed, order=order,
                       precision_bits=prec, threads=threads)
    runs = study.series(obs)
    notes = [_stamp_line(stamp)]
    rows = []
    if fig != "fig5":
        for r in runs:
            if r.gate_error is not None:
                notes.append(f"T={r.temperature:g}: valid up to order {r.max_order} ({r.gate_error})")
            if not r.approximants:
                continue
            a = r.approximants[-1]
            for k, (w, rho, rn) in enumerate(zip(a.omegas, a.rhos, a.normalized_rhos)):
                rows.append([r.temperature, a.order, k, w, 1.0 / w, rho, rn])
        header = ["T", "order", "k", "omega", "one_over_omega", "rho", "rho_normalized"]
        if fig in ("fig1", "fig3"):
            pts = [(r.temperature, 1.0 / r.dominant()[0]) for r in runs if r.approximants]
            if len(pts) > 1:
                notes.append(f"log-log slope of dominant 1/omega vs T: {loglog_slope(*zip(*pts)):.4f}")
        else:
            for r in runs:
                if r.approximants:
                    notes.append(f"T={r.temperature:g}: dominant normalized residue {r.dominant()[1]:.6f}")
    else:
        run = runs[0]
        ov = sech_overlay(run, (3, 4), prec)
        notes.append(f"sech b={ov['b']:.6g}")
        for n, d in ov["orders"].items():
            for series in ("observable", "sech"):
                a = d[series]
                name = obs if series == "observable" else "sech"
                for k, (w, rn) in enumerate(zip(a.omegas, a.normalized_rhos)):
                    rows.append([name, n, k, w, 1.0 / w, rn])
            notes.append(f"order {n}: log-gap {obs} {d['gap_observable']:.4f}, sech {d['gap_sech']:.4f}, "
                         f"ratio {d['gap_ratio']:.4f} (absolute-gap ratio {d['abs_gap_ratio']:.4g})")
        header = ["series", "order", "k", "omega", "one_over_omega", "rho_normalized"]
    with open(dest, "w", newline="") as fh:
        for n in notes:
            fh.write(f"# {n}\n")
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
    for n in notes[1:]:
        print(n)
    print(f"wrote {dest}")
    return dest


# -- entry point ------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="acsm", description=__doc__)
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", required=True, help="run config (JSON or YAML)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--threads", type=int)
        p.add_argument("--precision", type=int, help="working precision in bits (default $ACSM_PRECISION_BITS or 512)")

    p = sub.add_parser("sample", help="draw a Gibbs sample")
    common(p)
    p.add_argument("--seed", type=int)

    p = sub.add_parser("moments", help="estimate c_n with jackknife errors")
    common(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--sample", help="existing sample file")
    p.add_argument("--order", type=int, help="largest moment index n")

    p = sub.add_parser("poles", help="atomic approximants from a moment file")
    p.add_argument("moments")
    common(p, config=False)
    p.add_argument("--order", type=int, help="largest approximant order")
    p.add_argument("--all-orders", action="store_true", help="write every order up to --order")

    p = sub.add_parser("criteria", help="regularity criteria from a moment or pole file")
    p.add_argument("input")
    common(p, config=False)

    p = sub.add_parser("verify", help="molecular-dynamics check of the truncation bounds")
    common(p)
    p.add_argument("--seed", type=int)

    p = sub.add_parser("reproduce", help="tables behind the figures")
    p.add_argument("figure")
    common(p, config=False)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--scale", choices=sorted(SCALES), default="desk")
    p.add_argument("--samples", type=int, help="override the sample count of the scale")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command in ("sample", "moments", "verify"):
            cfg = _apply_overrides(load_config(args.config), args)
            if args.command == "sample":
                cmd_sample(cfg)
            elif args.command == "moments":
                if args.order is not None:
                    if args.order > JET_ORDER_CAP:
                        raise ConfigError(f"--order {args.order} exceeds the jet order cap {JET_ORDER_CAP}")
                    cfg["max_order"] = args.order
                cmd_moments(cfg, args.sample)
            else:
                return cmd_verify(cfg)
        elif args.command == "poles":
            return cmd_poles(args.moments, args.out or ".", args.order, args.precision, args.all_orders)
        elif args.command == "criteria":
            cmd_criteria(args.input, args.out or ".", args.precision)
        elif args.command == "reproduce":
            cmd_reproduce(args.figure, args.scale, args.out or ".", args.seed, args.threads or 1,
                          args.precision, args.samples)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FileNotFoundError, PermissionError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except jsonschema.ValidationError as exc:
        print(f"schema error: {exc.message}", file=sys.stderr)
        return EXIT_CONFIG
    except dy.AlignmentError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except dy.IntegratorError as exc:
        hint = f"; suggested dt {exc.suggested_dt:.3g}" if exc.suggested_dt else ""
        print(f"integrator rejected the run: {exc}{hint}", file=sys.stderr)
        return EXIT_INTEGRATOR
    except MomentGateError as exc:
        print(f"numerical gate: {exc}", file=sys.stderr)
        return EXIT_GATE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
