"""Command-line front end.

Exit status: 0 success, 2 invalid input, 3 numerical failure. Each command
writes ``<output>.config.json`` with the resolved arguments next to its main
output (``overlap`` has no output file and writes ``orbopt-overlap.config.json``
in the working directory unless ``--config-log`` says otherwise).
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from orbopt import __version__
from orbopt.core import Determinant, KappaGenerator, matrix_exponential, overlap
from orbopt.formats import (
    FormatError,
    parse_csf_file,
    parse_kappa,
    parse_statevector,
    read_fcidump,
    serialize_kappa,
    serialize_matrix,
    serialize_statevector,
    write_matrix_csv,
    write_report,
    write_trace,
)
from orbopt.optimizer import Backtracking, FixedStep, OptimizationError, select_reference_determinant
from orbopt.oracle import build_hubbard
from orbopt.workflows import (
    expand_csfs,
    model_ground_state,
    natorb_analysis,
    optimize_state,
    optimize_summary,
    sweep_nsd,
    sweep_reference,
)

log = logging.getLogger("orbopt")

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3


class CliError(Exception):
    def __init__(self, message, code=EXIT_INVALID):
        super().__init__(message)
        self.code = code


def _read(path) -> str:
    return Path(path).read_text(encoding="utf-8")


def _write(path, text: str) -> None:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(text, encoding="utf-8")


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _optimizer_kw(args) -> dict:
    rule = FixedStep(args.step) if args.step_rule == "fixed" else Backtracking()
    return {"max_iters": args.max_iters, "grad_tol": args.grad_tol, "step_rule": rule}


def _load_kappa(path, n):
    if path is None:
        return None
    k = parse_kappa(_read(path))
    if k.n_orbitals != n:
        raise CliError(f"kappa is {k.n_orbitals}x{k.n_orbitals}, statevector has {n} orbitals")
    return k


# -- commands -----------------------------------------------------------------


def cmd_expand(args) -> tuple[dict, Path]:
    csfs = parse_csf_file(_read(args.csf))
    res = expand_csfs(csfs, args.t_csf, args.t_sd, singlet_embedding=args.singlet_embedding, normalize=args.normalize)
    _write(args.out, serialize_statevector(res.statevector))
    return res.summary(), Path(args.out)


def cmd_optimize(args) -> tuple[dict, Path]:
    psi = parse_statevector(_read(args.state))
    if len(psi) == 0:
        raise CliError("statevector is empty")
    kw = _optimizer_kw(args)
    kw["seed_kappa"] = _load_kappa(args.seed_kappa, psi.n_orbitals)
    trace_path = Path(args.trace or Path(args.out_kappa).with_suffix(".trace.jsonl"))
    try:
        trace = optimize_state(psi, args.frac, **kw)
    except OptimizationError as exc:
        _write(trace_path, write_trace(exc.trace.records))
        raise CliError(f"{exc} (trace kept in {trace_path})", EXIT_NUMERICAL) from exc
    _write(args.out_kappa, serialize_kappa(trace.kappa))
    _write(trace_path, trace.to_jsonl())
    summary = optimize_summary(psi, trace)
    summary["trace"] = str(trace_path)
    return summary, Path(args.out_kappa)


def cmd_overlap(args) -> tuple[dict, Path]:
    psi = parse_statevector(_read(args.state))
    if len(psi) == 0:
        raise CliError("statevector is empty")
    if args.det:
        a, _, b = args.det.partition(",")
        j = Determinant(a.strip(), b.strip())
    else:
        j = select_reference_determinant(psi)
    kappa = _load_kappa(args.kappa, psi.n_orbitals) or KappaGenerator.zeros(psi.n_orbitals)
    r = overlap(j, psi, matrix_exponential(kappa), args.n_sd, workers=args.workers)
    summary = {
        "reference": [j.alpha, j.beta],
        "eta": r.eta,
        "p0": r.p0,
        "n_sd_used": r.n_sd_used,
        "norm_sq_used": r.norm_sq_used,
        "eps_r2": r.eps_r2,
    }
    return summary, Path(args.config_log or "orbopt-overlap")


def cmd_natorb(args) -> tuple[dict, Path]:
    psi = parse_statevector(_read(args.state))
    if len(psi) == 0:
        raise CliError("statevector is empty")
    kappa = _load_kappa(args.kappa, psi.n_orbitals)
    res = natorb_analysis(psi, kappa)
    out = Path(args.out_dir)
    _write(out / "occupations.txt", serialize_matrix(res.occupations[None, :]))
    _write(out / "natural_orbitals.txt", serialize_matrix(res.no_orbitals))
    _write(out / "mo_no_overlap.csv", write_matrix_csv(res.mo_no))
    if res.mo_opt is not None:
        _write(out / "mo_opt_overlap.csv", write_matrix_csv(res.mo_opt))
    return res.summary(), out / "natorb"


def cmd_sweep_nsd(args) -> tuple[dict, Path]:
    psi = parse_statevector(_read(args.state))
    if len(psi) == 0:
        raise CliError("statevector is empty")
    kappa = _load_kappa(args.kappa, psi.n_orbitals)
    rows = sweep_nsd(psi, kappa, args.grid, workers=args.workers)
    _write(args.out, write_report(rows))
    violations = sum(r.extras["eta_error"] > r.eps_r2 for r in rows)
    return {"rows": len(rows), "bound_violations": violations}, Path(args.out)


def _model_from_args(args):
    if args.fcidump:
        return read_fcidump(args.fcidump)
    if args.sites is None:
        raise CliError("give --sites (Hubbard chain) or --fcidump")
    return build_hubbard(args.sites, args.t, args.u, args.pbc)


def cmd_sweep_reference(args) -> tuple[dict, Path]:
    h, result = model_ground_state(_model_from_args(args), args.na, args.nb, args.basis, seed=args.seed)
    rows = sweep_reference(h, result, args.fractions, args.frac, **_optimizer_kw(args))
    _write(args.out, write_report(rows))
    return {"energy": result.energy, "rows": len(rows), "n_sd_full": len(result.statevector)}, Path(args.out)


def cmd_model(args) -> tuple[dict, Path]:
    if args.model_kind == "hubbard":
        h0 = build_hubbard(args.sites, args.t, args.u, args.pbc)
        basis = args.basis
    else:
        h0 = read_fcidump(args.path)
        basis = "site"
    h, result = model_ground_state(h0, args.na, args.nb, basis, seed=args.seed)
    _write(args.out, serialize_statevector(result.statevector))
    if getattr(args, "fcidump_out", None):
        from orbopt.formats import write_fcidump

        write_fcidump(args.fcidump_out, h, n_electrons=args.na + args.nb, ms2=args.na - args.nb)
    summary = {
        "energy": result.energy + h.core_energy,
        "electronic_energy": result.energy,
        "gap": result.gap,
        "residual": result.residual,
        "n_sd": len(result.statevector),
        "basis": basis,
    }
    return summary, Path(args.out)


# -- parser -------------------------------------------------------------------


def _add_optimizer_flags(p, frac_default):
    p.add_argument("--frac", type=float, default=frac_default, help="fraction of determinants used while optimizing")
    p.add_argument("--max-iters", type=int, default=5000)
    p.add_argument("--grad-tol", type=float, default=1e-6)
    p.add_argument("--step-rule", choices=("backtracking", "fixed"), default="backtracking")
    p.add_argument("--step", type=float, default=0.1, help="step length for --step-rule fixed")


def _add_model_flags(p, fcidump=True):
    p.add_argument("--sites", type=int)
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--u", type=float, default=4.0)
    p.add_argument("--pbc", action="store_true")
    if fcidump:
        p.add_argument("--fcidump", help="read the model from an FCIDUMP file instead")
    p.add_argument("--na", type=int, required=True)
    p.add_argument("--nb", type=int, required=True)
    p.add_argument("--basis", choices=("mo", "site"), default="mo", help="Hubbard basis for the reference state")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="orbopt", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("--seed", type=int, default=0, help="seed for any randomized step")
    ap.add_argument("--workers", type=int, default=1, help="threads for the overlap reduction")
    ap.add_argument("--json", action="store_true", help="print a JSON summary on stdout")
    ap.add_argument("--config-log", help="path stem for the resolved-config record")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("expand", help="CSF list -> determinant statevector")
    p.add_argument("csf")
    p.add_argument("--out", required=True)
    p.add_argument("--t-csf", type=float, default=1e-4)
    p.add_argument("--t-sd", type=float, default=1e-4)
    p.add_argument("--singlet-embedding", action="store_true")
    p.add_argument("--normalize", action="store_true", help="renormalize the expanded statevector")
    p.set_defaults(func=cmd_expand)

    p = sub.add_parser("optimize", help="maximize the overlap of the leading determinant")
    p.add_argument("state")
    p.add_argument("--out-kappa", required=True)
    p.add_argument("--trace", help="JSON-lines trace path (default: next to the kappa file)")
    p.add_argument("--seed-kappa", help="start from this kappa instead of zero")
    _add_optimizer_flags(p, 0.1)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("overlap", help="overlap of a determinant with a statevector")
    p.add_argument("state")
    p.add_argument("--kappa")
    p.add_argument("--n-sd", type=int)
    p.add_argument("--det", help="'alpha,beta' occupation strings (default: largest amplitude)")
    p.set_defaults(func=cmd_overlap)

    p = sub.add_parser("natorb", help="natural orbitals and basis-overlap matrices")
    p.add_argument("state")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--kappa", help="also compare with the optimized orbitals")
    p.set_defaults(func=cmd_natorb)

    p = sub.add_parser("sweep-nsd", help="p0 against the number of determinants")
    p.add_argument("state")
    p.add_argument("--kappa", required=True)
    p.add_argument("--grid", type=_ints)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep_nsd)

    p = sub.add_parser("sweep-reference", help="optimize on truncated references of a model ground state")
    _add_model_flags(p)
    p.add_argument("--fractions", type=_floats, default=[0.05, 0.2, 1.0])
    p.add_argument("--out", required=True)
    _add_optimizer_flags(p, 1.0)
    p.set_defaults(func=cmd_sweep_reference)

    p = sub.add_parser("model", help="exact ground state of a model Hamiltonian")
    msub = p.add_subparsers(dest="model_kind", required=True)
    q = msub.add_parser("hubbard")
    _add_model_flags(q, fcidump=False)
    q.add_argument("--out", required=True)
    q.add_argument("--fcidump-out", help="also write the Hamiltonian in the chosen basis")
    q.set_defaults(func=cmd_model)
    q = msub.add_parser("fcidump")
    q.add_argument("path")
    q.add_argument("--na", type=int, required=True)
    q.add_argument("--nb", type=int, required=True)
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_model)
    return ap


def _config_record(args) -> dict:
    skip = {"func", "json", "config_log", "verbose"}
    return {"version": __version__, **{k: v for k, v in vars(args).items() if k not in skip}}


def _jsonable(x):
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.generic):
        return x.item()
    return x


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    if args.workers < 1:
        parser.error("--workers must be >= 1")
    try:
        summary, anchor = args.func(args)
        stem = Path(args.config_log) if args.config_log else anchor
        _write(stem.with_name(stem.name + ".config.json"), json.dumps(_jsonable(_config_record(args)), indent=2) + "\n")
    except CliError as exc:
        log.error("%s", exc)
        return exc.code
    except (FormatError, ValueError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_INVALID
    except (ArithmeticError, np.linalg.LinAlgError, RuntimeError) as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERICAL
    if args.json:
        print(json.dumps(_jsonable({"command": args.command, **summary}), sort_keys=True))
    else:
        for k, v in summary.items():
            print(f"{k}: {v}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
