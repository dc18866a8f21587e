"""Text formats: statevectors, CSF lists, matrices, CSV reports, FCIDUMP, JSON traces.

Every writer emits a canonical form and prints reals with ``%.17g`` so that
``parse(write(x)) == x`` bit for bit. Parse failures raise :class:`FormatError`
carrying the 1-based line number.
"""

from __future__ import annotations

import csv
import io
import json
import math
import re
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field

import numpy as np

from orbopt.core import Determinant, KappaGenerator, Statevector
from orbopt.csf import CouplingError, CsfEntry, normalize_coupling, validate_path

FLOAT_FMT = "%.17g"


class FormatError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def fmt(x: float) -> str:
    return FLOAT_FMT % x


def _parse_float(token: str, line: int) -> float:
    try:
        v = float(token)
    except ValueError:
        raise FormatError(f"not a number: {token!r}", line) from None
    if not math.isfinite(v):
        raise FormatError(f"non-finite value {token!r}", line)
    return v


def _content_lines(text: str):
    """``(line_no, stripped)`` for non-blank lines."""
    for no, raw in enumerate(text.splitlines(), start=1):
        s = raw.strip()
        if s:
            yield no, s


def _parse_header(line: str, no: int, tag: str, keys: Sequence[str], optional: Sequence[str] = ()):
    parts = line.split()
    if not parts or parts[0] != tag:
        raise FormatError(f"expected header starting with {tag}", no)
    fields = {}
    for p in parts[1:]:
        key, sep, val = p.partition("=")
        if not sep or key not in (*keys, *optional):
            raise FormatError(f"unexpected header field {p!r}", no)
        if key in fields:
            raise FormatError(f"repeated header field {key}", no)
        try:
            fields[key] = int(val)
        except ValueError:
            raise FormatError(f"header field {key} must be an integer", no) from None
    missing = [k for k in keys if k not in fields]
    if missing:
        raise FormatError(f"header lacks {', '.join(missing)}", no)
    return fields


# -- statevector ------------------------------------------------------------


def parse_statevector(text: str) -> Statevector:
    """Read ``#SDVEC L= NA= NB=`` followed by ``alpha beta amplitude`` lines."""
    lines = list(_content_lines(text))
    if not lines:
        raise FormatError("empty statevector file", 1)
    no, head = lines[0]
    h = _parse_header(head, no, "#SDVEC", ("L", "NA", "NB"))
    n, na, nb = h["L"], h["NA"], h["NB"]
    if n < 1 or not (0 <= na <= n and 0 <= nb <= n):
        raise FormatError("inconsistent header counts", no)
    entries, seen = [], {}
    for no, line in lines[1:]:
        toks = line.split()
        if len(toks) != 3:
            raise FormatError("expected '<alpha> <beta> <amplitude>'", no)
        a, b, amp = toks
        for name, s, want in (("alpha", a, na), ("beta", b, nb)):
            if len(s) != n or set(s) - {"0", "1"}:
                raise FormatError(f"{name} string {s!r} must have {n} characters from {{0,1}}", no)
            if s.count("1") != want:
                raise FormatError(f"{name} string {s!r} has popcount {s.count('1')}, header says {want}", no)
        det = Determinant(a, b)
        if det in seen:
            raise FormatError(f"duplicate determinant (first seen on line {seen[det]})", no)
        seen[det] = no
        entries.append((det, _parse_float(amp, no)))
    try:
        return Statevector.from_entries(n, na, nb, entries)
    except ValueError as exc:
        raise FormatError(str(exc)) from exc


def serialize_statevector(psi: Statevector) -> str:
    out = [f"#SDVEC L={psi.n_orbitals} NA={psi.n_alpha} NB={psi.n_beta}"]
    out += [f"{d.alpha} {d.beta} {fmt(c)}" for d, c in psi]
    return "\n".join(out) + "\n"


# -- CSF lists --------------------------------------------------------------


@dataclass(frozen=True)
class CsfFile:
    """Parsed CSF list. ``n_orbitals`` and ``n_electrons`` are physical; ``aux`` auxiliaries follow."""

    n_orbitals: int
    n_electrons: int
    s2: int
    m2: int
    aux: int = 0
    entries: tuple[CsfEntry, ...] = field(default=())

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, i):
        return self.entries[i]

    @property
    def spin(self) -> float:
        return self.s2 / 2


def _csf_sort_key(c: CsfEntry):
    return (-abs(c.amplitude), c.coupling)


def parse_csf_file(text: str) -> CsfFile:
    """Read ``#CSFVEC L= NE= S2= M2= [AUX=]`` then ``<coupling> <amplitude>`` lines.

    The coupling may contain spaces; the last token is the amplitude. With
    ``AUX`` the couplings are singlet embeddings and must satisfy ``AUX = S2``.
    """
    lines = list(_content_lines(text))
    if not lines:
        raise FormatError("empty CSF file", 1)
    no, head = lines[0]
    h = _parse_header(head, no, "#CSFVEC", ("L", "NE", "S2", "M2"), ("AUX",))
    n, ne, s2, m2, aux = h["L"], h["NE"], h["S2"], h["M2"], h.get("AUX", 0)
    if s2 < 0 or abs(m2) > s2 or (s2 - m2) % 2 or (ne - s2) % 2 or ne > 2 * n:
        raise FormatError("inconsistent spin/electron header", no)
    if aux and (aux != s2 or m2 != s2):
        raise FormatError("singlet-embedded files need AUX = S2 = M2", no)
    width = n + aux
    entries, seen = [], {}
    for no, line in lines[1:]:
        toks = line.split()
        if len(toks) < 2:
            raise FormatError("expected '<coupling> <amplitude>'", no)
        coupling = normalize_coupling("".join(toks[:-1]))
        amp = _parse_float(toks[-1], no)
        if len(coupling) != width:
            raise FormatError(f"coupling {coupling!r} must have length {width}", no)
        try:
            final = validate_path(coupling)
        except CouplingError as exc:
            raise FormatError(str(exc), no) from None
        electrons = 2 * coupling.count("2") + coupling.count("+") + coupling.count("-")
        if electrons != ne + aux:
            raise FormatError(f"coupling {coupling!r} holds {electrons} electrons, expected {ne + aux}", no)
        if aux:
            tail = coupling[n:]
            if set(tail) - set("+-"):
                raise FormatError("auxiliary orbitals must be singly occupied", no)
            if final != 0 or validate_path(coupling[:n]) != s2:
                raise FormatError(f"coupling {coupling!r} is not a singlet embedding of 2S={s2}", no)
            entry = CsfEntry(coupling, amp, m2=0)
        else:
            if final != s2:
                raise FormatError(f"coupling {coupling!r} ends at 2S={final}, header says {s2}", no)
            entry = CsfEntry(coupling, amp, m2=m2)
        if coupling in seen:
            raise FormatError(f"duplicate coupling (first seen on line {seen[coupling]})", no)
        seen[coupling] = no
        entries.append(entry)
    entries.sort(key=_csf_sort_key)
    return CsfFile(n, ne, s2, m2, aux, tuple(entries))


def serialize_csf_file(csfs: CsfFile) -> str:
    head = f"#CSFVEC L={csfs.n_orbitals} NE={csfs.n_electrons} S2={csfs.s2} M2={csfs.m2}"
    if csfs.aux:
        head += f" AUX={csfs.aux}"
    out = [head] + [f"{c.coupling} {fmt(c.amplitude)}" for c in sorted(csfs.entries, key=_csf_sort_key)]
    return "\n".join(out) + "\n"


# -- matrices ---------------------------------------------------------------


def _rows_block(rows: list[tuple[int, str]], n_rows: int, n_cols: int) -> np.ndarray:
    if len(rows) != n_rows:
        line = rows[-1][0] if rows else 1
        raise FormatError(f"expected {n_rows} rows, found {len(rows)}", line)
    out = np.empty((n_rows, n_cols))
    for r, (no, line) in enumerate(rows):
        toks = line.split()
        if len(toks) != n_cols:
            raise FormatError(f"expected {n_cols} columns, found {len(toks)}", no)
        out[r] = [_parse_float(t, no) for t in toks]
    return out


def _matrix_lines(m: np.ndarray) -> list[str]:
    return [" ".join(fmt(x) for x in row) for row in np.atleast_2d(m).tolist()]


def parse_kappa(text: str, tol: float = 1e-12) -> KappaGenerator:
    lines = list(_content_lines(text))
    if not lines:
        raise FormatError("empty kappa file", 1)
    no, head = lines[0]
    n = _parse_header(head, no, "#KAPPA", ("L",))["L"]
    m = _rows_block(lines[1:], n, n)
    try:
        return KappaGenerator.from_matrix(m, tol=tol)
    except ValueError as exc:
        raise FormatError(str(exc)) from exc


def serialize_kappa(kappa: KappaGenerator) -> str:
    return "\n".join([f"#KAPPA L={kappa.n_orbitals}"] + _matrix_lines(kappa.kappa)) + "\n"


def parse_matrix(text: str) -> np.ndarray:
    lines = list(_content_lines(text))
    if not lines:
        raise FormatError("empty matrix file", 1)
    no, head = lines[0]
    h = _parse_header(head, no, "#MATRIX", ("ROWS", "COLS"))
    return _rows_block(lines[1:], h["ROWS"], h["COLS"])


def serialize_matrix(m) -> str:
    m = np.atleast_2d(np.asarray(m, dtype=float))
    return "\n".join([f"#MATRIX ROWS={m.shape[0]} COLS={m.shape[1]}"] + _matrix_lines(m)) + "\n"


def write_matrix_csv(m, prefix: str = "orb_") -> str:
    """Square matrix as CSV with ``orb_<i>`` row and column labels."""
    m = np.asarray(m, dtype=float)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([""] + [f"{prefix}{j}" for j in range(m.shape[1])])
    for i, row in enumerate(m.tolist()):
        w.writerow([f"{prefix}{i}"] + [fmt(x) for x in row])
    return buf.getvalue()


def parse_matrix_csv(text: str) -> np.ndarray:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise FormatError("empty CSV", 1)
    n_cols = len(rows[0]) - 1
    out = []
    for no, row in enumerate(rows[1:], start=2):
        if len(row) != n_cols + 1:
            raise FormatError(f"expected {n_cols + 1} fields", no)
        out.append([_parse_float(x, no) for x in row[1:]])
    return np.array(out).reshape(len(out), n_cols)


# -- CSV reports ------------------------------------------------------------

REPORT_COLUMNS = ("label", "n_sd", "p0", "eps_r2")


@dataclass(frozen=True)
class ReportRow:
    """One report line. ``extras`` maps further column names to real values."""

    label: str
    n_sd: int
    p0: float
    eps_r2: float
    extras: dict = field(default_factory=dict)


def write_report(rows: Sequence[ReportRow]) -> str:
    """CSV with columns ``label,n_sd,p0,eps_r2`` then the extras of the first row, in order."""
    extra_keys = list(rows[0].extras) if rows else []
    for r in rows:
        if list(r.extras) != extra_keys:
            raise ValueError("report rows have inconsistent extra columns")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([*REPORT_COLUMNS, *extra_keys])
    for r in rows:
        w.writerow([r.label, str(int(r.n_sd)), fmt(r.p0), fmt(r.eps_r2), *(fmt(r.extras[k]) for k in extra_keys)])
    return buf.getvalue()


def parse_report(text: str) -> list[ReportRow]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise FormatError("empty report", 1)
    header = rows[0]
    if tuple(header[:4]) != REPORT_COLUMNS:
        raise FormatError(f"report header must start with {','.join(REPORT_COLUMNS)}", 1)
    extra_keys = header[4:]
    out = []
    for no, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise FormatError(f"expected {len(header)} fields", no)
        try:
            n_sd = int(row[1])
        except ValueError:
            raise FormatError(f"n_sd must be an integer, got {row[1]!r}", no) from None
        extras = {k: _parse_float(v, no) for k, v in zip(extra_keys, row[4:])}
        out.append(ReportRow(row[0], n_sd, _parse_float(row[2], no), _parse_float(row[3], no), extras))
    return out


# -- JSON-lines optimization traces -------------------------------------------


def write_trace(records: Iterable) -> str:
    return "".join(r.to_json() + "\n" for r in records)


def parse_trace(text: str):
    from orbopt.optimizer import IterationRecord

    out = []
    for no, line in _content_lines(text):
        try:
            d = json.loads(line)
            out.append(IterationRecord(int(d["iter"]), float(d["f"]), float(d["grad_inf"]), float(d["step"])))
        except (ValueError, KeyError, TypeError) as exc:
            raise FormatError(f"bad trace record: {exc}", no) from None
    return out


# -- FCIDUMP ----------------------------------------------------------------

_NAMELIST_INT = re.compile(r"\b(NORB|NELEC|MS2|ISYM)\s*=\s*(-?\d+)", re.IGNORECASE)


def parse_fcidump(text: str):
    """Chemists'-notation FCIDUMP. Zero indices mark one-body and core records."""
    from orbopt.oracle import ModelHamiltonian

    lines = text.splitlines()
    header, body_start = [], None
    for no, raw in enumerate(lines, start=1):
        header.append(raw)
        s = raw.strip().upper()
        if s.startswith("&END") or s == "/" or s.endswith("&END") or s.endswith("/"):
            body_start = no
            break
    if body_start is None:
        raise FormatError("FCIDUMP header is not terminated by &END or /", len(lines) or 1)
    head_text = " ".join(header)
    if "&FCI" not in head_text.upper():
        raise FormatError("FCIDUMP header must open with &FCI", 1)
    meta = {k.upper(): int(v) for k, v in _NAMELIST_INT.findall(head_text)}
    if "NORB" not in meta:
        raise FormatError("FCIDUMP header lacks NORB", 1)
    n = meta["NORB"]
    if n < 1:
        raise FormatError("NORB must be positive", 1)
    h1 = np.zeros((n, n))
    eri = np.zeros((n,) * 4)
    have_eri = False
    core = 0.0
    for no in range(body_start + 1, len(lines) + 1):
        s = lines[no - 1].strip()
        if not s:
            continue
        toks = s.split()
        if len(toks) != 5:
            raise FormatError("expected 'value i j k l'", no)
        val = _parse_float(toks[0].replace("D", "E").replace("d", "e"), no)
        try:
            i, j, k, l = (int(t) for t in toks[1:])
        except ValueError:
            raise FormatError("indices must be integers", no) from None
        if any(x < 0 or x > n for x in (i, j, k, l)):
            raise FormatError(f"index out of range 0..{n}", no)
        if i and j and k and l:
            i, j, k, l = i - 1, j - 1, k - 1, l - 1
            for p, q, r, t in ((i, j, k, l), (k, l, i, j)):
                for a, b in ((p, q), (q, p)):
                    for c, d in ((r, t), (t, r)):
                        eri[a, b, c, d] = val
            have_eri = True
        elif i and j and not k and not l:
            h1[i - 1, j - 1] = h1[j - 1, i - 1] = val
        elif not (i or j or k or l):
            core = val
        elif i and not (j or k or l):
            continue  # orbital energy record, not needed
        else:
            raise FormatError(f"unsupported index pattern {i} {j} {k} {l}", no)
    meta = {k: v for k, v in meta.items() if k != "NORB"}
    return ModelHamiltonian(h1, eri=eri if have_eri else None, core_energy=core, meta=meta)


def read_fcidump(path):
    with open(path, encoding="utf-8") as fh:
        return parse_fcidump(fh.read())


def serialize_fcidump(h, n_electrons: int | None = None, ms2: int | None = None) -> str:
    n = h.n_orbitals
    nelec = n_electrons if n_electrons is not None else h.meta.get("NELEC", 0)
    ms = ms2 if ms2 is not None else h.meta.get("MS2", 0)
    out = [
        f" &FCI NORB={n},NELEC={nelec},MS2={ms},",
        "  ORBSYM=" + ",".join(["1"] * n) + ",",
        "  ISYM=1,",
        " &END",
    ]
    eri = h.dense_eri()
    for i in range(n):
        for j in range(i + 1):
            for k in range(n):
                for l in range(k + 1):
                    if i * (i + 1) // 2 + j < k * (k + 1) // 2 + l:
                        continue
                    v = eri[i, j, k, l]
                    if v != 0.0:
                        out.append(f"{fmt(v)} {i + 1} {j + 1} {k + 1} {l + 1}")
    for i in range(n):
        for j in range(i + 1):
            if h.h1[i, j] != 0.0:
                out.append(f"{fmt(h.h1[i, j])} {i + 1} {j + 1} 0 0")
    out.append(f"{fmt(h.core_energy)} 0 0 0 0")
    return "\n".join(out) + "\n"


def write_fcidump(path, h, **kw) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_fcidump(h, **kw))
