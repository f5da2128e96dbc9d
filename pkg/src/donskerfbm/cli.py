"""Command line: simulate, verify, converge, replay.

Exit codes: 0 success, 1 internal error, 2 configuration error, 3 bound
violation (verify) or digest mismatch (replay).
"""

import argparse
import os
import sys
import tempfile

import numpy as np

from . import fbm as fbm_mod
from . import io, kernels, momentlab, solver
from . import stats as st
from .driver import DriverPath, HurstParam, chen_defect, eval_weights, levy_area
from .errors import DomainError
from .noise import NoiseLaw, RandomWalkNoise

EXIT_OK, EXIT_INTERNAL, EXIT_CONFIG, EXIT_VIOLATION = 0, 1, 2, 3

ASYMMETRIC_LAW = ((-2.0, 0.2), (0.5, 0.8))


def parse_law(cfg):
    kind = cfg["noise"]["law"]
    if kind == "discrete":
        text = cfg["noise"]["atoms"]
        try:
            atoms = [tuple(float(x) for x in a.split(":")) for a in text.split(",") if a.strip()]
        except ValueError:
            raise io.ConfigError(f"[noise] atoms = {text!r}: expected value:prob,value:prob") from None
        return NoiseLaw.discrete(atoms)
    if kind not in ("rademacher", "scaled_uniform"):
        raise io.ConfigError(f"[noise] law = {kind!r}: expected rademacher, scaled_uniform or discrete")
    return NoiseLaw(kind)


def hurst(cfg):
    return HurstParam(float(cfg["driver"]["H"]), bool(cfg["driver"]["classical"]))


def snapshot(cfg):
    """Config as recorded in the manifest; thread count and output root do not affect results."""
    snap = {s: dict(v) for s, v in cfg.items()}
    snap["run"] = {k: v for k, v in snap["run"].items() if k not in ("threads", "out")}
    return snap


# simulate -------------------------------------------------------------------

def cmd_simulate(cfg, run):
    H = hurst(cfg)
    sim = cfg["simulate"]
    n, samples = int(sim["grid"]), int(sim["samples"])
    dims = int(cfg["noise"]["dims"])
    seed = int(cfg["run"]["seed"])
    if n < 1 or samples < 1:
        raise io.ConfigError("[simulate] grid and samples must be positive")
    t = fbm_mod.uniform_grid(n)
    if sim["kind"] == "donsker":
        noise = RandomWalkNoise(float(cfg["noise"]["eps"]), parse_law(cfg), dims, seed)
        W = eval_weights(noise, H.H, t)
        vals = np.stack([noise.eta_ensemble(i, 0, samples) @ W.T for i in range(1, dims + 1)], axis=-1)
    elif sim["kind"] == "fbm":
        vals = fbm_mod.simulate_fbm_ensemble(H, t, dims, seed, 0, samples, keep_increments=False).values
    else:
        raise io.ConfigError(f"[simulate] kind = {sim['kind']!r}: expected donsker or fbm")
    for s in range(samples):
        name = f"trajectory_{s:05d}.csv"
        io.write_trajectory(run.file(name), t, vals[s])
        run.record(name)
    print(f"wrote {samples} trajectories of {n + 1} points to {run.path}")
    return EXIT_OK


# verify ---------------------------------------------------------------------

def _verify_moments(cfg, report):
    vcfg = cfg["verify"]
    n = int(vcfg["n_samples"])
    max_m = int(vcfg["max_m"])
    seed = int(cfg["run"]["seed"])
    laws = {"rademacher": NoiseLaw.rademacher(), "asymmetric": NoiseLaw.discrete(ASYMMETRIC_LAW)}
    eps_grid = io.float_list(vcfg["eps_grid"], "[verify] eps_grid")
    u_grid = io.float_list(vcfg["u_grid"], "[verify] u_grid")
    for law_name, law in laws.items():
        for eps in eps_grid:
            noise = RandomWalkNoise(eps, law, 1, seed)
            for f in momentlab.CORPUS:
                S = momentlab.sample_S(f, noise, n)
                reps = [momentlab.check_J1(f, noise)]
                reps += [momentlab.check_even_moment(f, noise, m, n, S=S) for m in range(1, max_m + 1)]
                reps += [momentlab.check_odd_moment(f, noise, m, n, S=S) for m in range(1, max_m)]
                reps += [momentlab.check_Jm(f, noise, m, n, S=S) for m in range(2, max_m + 1)]
                reps += [momentlab.charfn_gap(f, noise, u, n, S=S) for u in u_grid]
                for r in reps:
                    d = r.to_dict()
                    d["inputs"]["law_name"] = law_name
                    report["moments"].append(d)


def _verify_fibonacci(cfg, report):
    top = int(cfg["verify"]["fib_max"])
    rows = []
    for n in range(2, top + 1):
        enum = int(kernels.count_compositions(n, 2)) if n <= momentlab.ENUMERATION_MAX else None
        rec = momentlab.fibonacci(n - 1)
        closed = momentlab.closed_form_count(n)
        agree = rec == closed and (enum is None or enum == rec)
        rows.append({"n": n, "enumeration": enum, "recurrence": rec, "closed_form": closed,
                     "agree": agree})
    report["fibonacci"] = {"checked": len(rows), "agreeing": sum(r["agree"] for r in rows), "rows": rows}


def _verify_driver(cfg, report):
    H = hurst(cfg)
    seed = int(cfg["run"]["seed"])
    k = int(cfg["verify"]["chen_triples"])
    # triples come from the counter-based stream, not a global RNG
    base = RandomWalkNoise(0.5, NoiseLaw.rademacher(), 1, seed).key(1)
    keys = kernels.keyed_uint64(base, 999, 1, 0, 3 * k)[0]
    unif = (keys >> np.uint64(11)).astype(float) * 2.0 ** -53
    rows = []
    for c in range(k):
        s, u, t = np.sort(unif[3 * c:3 * c + 3])
        eps = (0.05, 0.1, 0.2, 0.3)[c % 4]
        path = DriverPath(RandomWalkNoise(eps, NoiseLaw.rademacher(), 2, seed, sample=c), H)
        cd = chen_defect(path, float(s), float(u), float(t))
        A = levy_area(path, float(s), float(t)).values
        inc = path.values([float(t)])[0] - path.values([float(s)])[0]
        diag = float(np.max(np.abs(np.diag(A) - 0.5 * inc * inc)))
        rows.append({"s": float(s), "u": float(u), "t": float(t), "eps": eps, "sample": c,
                     "chen_defect": cd.max_norm, "error_budget": cd.error_budget,
                     "diagonal_defect": diag,
                     "verdict": momentlab.RESPECTED if cd.max_norm <= 1e-8 and diag <= 1e-8
                     else momentlab.VIOLATED})
    report["driver"] = rows


def cmd_verify(cfg, run):
    report = {"schema_version": io.SCHEMA_VERSION, "moments": []}
    _verify_fibonacci(cfg, report)
    _verify_driver(cfg, report)
    _verify_moments(cfg, report)
    verdicts = [r["verdict"] for r in report["moments"]] + [r["verdict"] for r in report["driver"]]
    fib_bad = report["fibonacci"]["checked"] - report["fibonacci"]["agreeing"]
    report["summary"] = {
        "checks": len(verdicts),
        "violated": verdicts.count(momentlab.VIOLATED) + fib_bad,
        "inconclusive": verdicts.count(momentlab.INCONCLUSIVE),
        "respected": verdicts.count(momentlab.RESPECTED),
        "fibonacci_agreeing": report["fibonacci"]["agreeing"],
        "inconclusive_checks": [
            f"{r['check']}:{r['order']}:{r['inputs']['f']}:eps={r['inputs']['eps']}:{r['inputs']['law_name']}"
            for r in report["moments"] if r["verdict"] == momentlab.INCONCLUSIVE],
    }
    io.write_json(run.file("verify_report.json"), report)
    run.record("verify_report.json")
    s = report["summary"]
    print(f"checks={s['checks']} respected={s['respected']} inconclusive={s['inconclusive']} "
          f"violated={s['violated']} fibonacci={s['fibonacci_agreeing']}/{report['fibonacci']['checked']}")
    return EXIT_VIOLATION if s["violated"] else EXIT_OK


# converge -------------------------------------------------------------------

def _preset(cfg):
    name = cfg["solver"]["preset"]
    if name not in solver.PRESETS:
        raise io.ConfigError(f"[solver] preset = {name!r}: expected one of {sorted(solver.PRESETS)}")
    return solver.PRESETS[name]()


def cmd_converge(cfg, run):
    H = hurst(cfg)
    ccfg = cfg["converge"]
    vf = _preset(cfg)
    eps_grid = io.float_list(ccfg["eps_grid"], "[converge] eps_grid")
    times = io.float_list(ccfg["times"], "[converge] times")
    n = int(ccfg["samples"])
    noise_cfg = solver.NoiseConfig(eps_grid[0], parse_law(cfg), int(cfg["run"]["seed"]),
                                   int(cfg["solver"]["substeps"]))
    fbm_cfg = solver.FbmConfig(H.H, int(cfg["fbm"]["grid"]), int(cfg["fbm"]["seed"]),
                               int(cfg["fbm"]["ratio"]))
    cache = io.EnsembleCache(run, times)
    study = st.solution_law_test(vf, noise_cfg, fbm_cfg, eps_grid, times, n,
                                 permutations=bool(ccfg["permutations"]), cache=cache)
    io.write_study_csv(run.file("study.csv"), study.rows)
    summary = study.to_dict()
    io.write_json(run.file("study.json"), summary)
    plot = {"schema_version": io.SCHEMA_VERSION, "x": "eps", "eps": summary["eps_grid"],
            "series": summary["series"], "decreasing": summary["decreasing"]}
    io.write_json(run.file("plot.json"), plot)
    for name in ("study.csv", "study.json", "plot.json"):
        run.record(name)
    for k, v in summary["decreasing"].items():
        print(f"{k}: {' '.join('%.5g' % x for x in summary['series'][k])} decreasing={v}")
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "verify": cmd_verify, "converge": cmd_converge}


# replay ---------------------------------------------------------------------

def cmd_replay(manifest_path, out_root):
    old = io.ExperimentManifest.from_dict(io.read_json(manifest_path))
    if old.command not in COMMANDS:
        raise io.ConfigError(f"{manifest_path}: unknown command {old.command!r}")
    fresh = io.ExperimentManifest(old.command, old.config, old.seed)
    cfg = {s: dict(v) for s, v in old.config.items()}
    cfg["run"] = dict(cfg["run"], threads=kernels.get_num_threads(), out=out_root)
    run = io.RunDirectory(out_root, fresh)
    fresh.partial.clear()
    code = COMMANDS[old.command](cfg, run)
    run.finish()
    ok = True
    expected = dict(old.partial, **old.outputs)
    produced = dict(fresh.partial, **fresh.outputs)
    for name, digest in sorted(expected.items()):
        new = produced.get(name)
        same = new == digest
        ok &= same
        print(f"{'match' if same else 'MISMATCH'} {name}")
    if not ok:
        return EXIT_VIOLATION
    print(f"replay of {old.run_id()} reproduced {len(expected)} files")
    return code


# entry point ----------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="donskerfbm", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="INI file with [run], [noise], [driver], ... sections")
    p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override one configuration value")
    p.add_argument("--threads", type=int, default=None, help="worker threads (results do not depend on it)")
    p.add_argument("--out", default=None, help="root directory for run directories")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="write driver or fBm trajectories")
    s.add_argument("--kind", choices=["donsker", "fbm"])
    s.add_argument("--H", type=float)
    s.add_argument("--classical", action="store_true", help="allow H = 1/2 (Brownian case)")
    s.add_argument("--eps", type=float)
    s.add_argument("--seed", type=int)
    s.add_argument("--grid", type=int)
    s.add_argument("--samples", type=int)
    s.add_argument("--dims", type=int)
    s.add_argument("--law", choices=["rademacher", "scaled_uniform", "discrete"])

    v = sub.add_parser("verify", help="moment bounds, Chen defects and decomposition counts")
    v.add_argument("--n-samples", type=int)
    v.add_argument("--fib-max", type=int)
    v.add_argument("--eps-grid")
    v.add_argument("--seed", type=int)

    c = sub.add_parser("converge", help="eps-sweep of the solution law against the limit")
    c.add_argument("--preset")
    c.add_argument("--H", type=float)
    c.add_argument("--eps-grid")
    c.add_argument("--samples", type=int)
    c.add_argument("--seed", type=int)
    c.add_argument("--ref-seed", type=int)
    c.add_argument("--times")
    c.add_argument("--no-permutations", action="store_true")

    r = sub.add_parser("replay", help="re-run a manifest and compare output digests")
    r.add_argument("manifest")
    return p


_FLAG_MAP = {
    "kind": ("simulate", "kind"), "H": ("driver", "H"), "eps": ("noise", "eps"),
    "seed": ("run", "seed"), "grid": ("simulate", "grid"), "samples": None,
    "dims": ("noise", "dims"), "law": ("noise", "law"), "n_samples": ("verify", "n_samples"),
    "fib_max": ("verify", "fib_max"), "eps_grid": None, "preset": ("solver", "preset"),
    "ref_seed": ("fbm", "seed"), "times": ("converge", "times"),
}


def apply_flags(cfg, args):
    for flag, target in _FLAG_MAP.items():
        val = getattr(args, flag, None)
        if val is None:
            continue
        if flag == "samples":
            target = ("simulate", "samples") if args.command == "simulate" else ("converge", "samples")
        elif flag == "eps_grid":
            target = ("verify" if args.command == "verify" else "converge", "eps_grid")
        cfg[target[0]][target[1]] = val
    if getattr(args, "classical", False):
        cfg["driver"]["classical"] = True
    if getattr(args, "no_permutations", False):
        cfg["converge"]["permutations"] = False
    return cfg


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.threads is not None:
            if args.threads < 1:
                raise io.ConfigError("--threads must be >= 1")
            kernels.set_num_threads(args.threads)
        if args.command == "replay":
            out = args.out or tempfile.mkdtemp(prefix="donskerfbm-replay-")
            return cmd_replay(args.manifest, out)
        cfg = apply_flags(io.load_config(args.config, args.set), args)
        if args.out:
            cfg["run"]["out"] = args.out
        if args.command in ("simulate", "converge"):
            hurst(cfg)  # validate before creating a run directory
        manifest = io.ExperimentManifest(args.command, snapshot(cfg), int(cfg["run"]["seed"]))
        run = io.RunDirectory(cfg["run"]["out"], manifest)
        code = COMMANDS[args.command](cfg, run)
        run.finish()
        print(f"manifest: {os.path.relpath(run.manifest_path)}")
        return code
    except (DomainError, io.ConfigError) as exc:
        print(f"donskerfbm: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - reported as an internal error
        print(f"donskerfbm: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
