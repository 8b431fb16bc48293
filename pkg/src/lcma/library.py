"""Built-in schemes, the plain-text scheme format, and the scheme catalog.

File format::

    # comment
    m k n R
    U 1
    <m rows of k entries>
    ...
    U R
    V 1
    <k rows of n entries>
    ...
    W R
    <m rows of n entries>
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from importlib import resources
from typing import Dict, Iterator, List, Tuple

import numpy as np

from .errors import CoefficientRangeError, LcmaError, SchemeParseError, SchemeShapeError, SchemeValidationError
from .scheme import LcmaScheme, compose, standard_scheme, validate_scheme

STRASSEN = "strassen-2x2x2-r7"
LADERMAN = "laderman-3x3x3-r23"
STRASSEN2 = "strassen2-4x4x4-r49"
STANDARD_222 = "standard-2x2x2-r8"

_LADERMAN_FILE = "laderman-3x3x3-r23.txt"

# Strassen (1969), rows are r = 1..7:
#   H1 = (A11 + A22)(B11 + B22)   H5 = (A11 + A12) B22
#   H2 = (A21 + A22) B11          H6 = (A21 - A11)(B11 + B12)
#   H3 = A11 (B12 - B22)          H7 = (A12 - A22)(B21 + B22)
#   H4 = A22 (B21 - B11)
#   C11 = H1 + H4 - H5 + H7       C12 = H3 + H5
#   C21 = H2 + H4                 C22 = H1 - H2 + H3 + H6
_STRASSEN_U = [
    [[1, 0], [0, 1]],
    [[0, 0], [1, 1]],
    [[1, 0], [0, 0]],
    [[0, 0], [0, 1]],
    [[1, 1], [0, 0]],
    [[-1, 0], [1, 0]],
    [[0, 1], [0, -1]],
]
_STRASSEN_V = [
    [[1, 0], [0, 1]],
    [[1, 0], [0, 0]],
    [[0, 1], [0, -1]],
    [[-1, 0], [1, 0]],
    [[0, 0], [0, 1]],
    [[1, 1], [0, 0]],
    [[0, 0], [1, 1]],
]
_STRASSEN_W = [
    [[1, 0], [0, 1]],
    [[0, 0], [1, -1]],
    [[0, 1], [0, 1]],
    [[1, 0], [1, 0]],
    [[-1, 1], [0, 0]],
    [[0, 0], [0, 1]],
    [[1, 0], [0, 0]],
]


def strassen_scheme() -> LcmaScheme:
    return LcmaScheme(2, 2, 2, 7, _STRASSEN_U, _STRASSEN_V, _STRASSEN_W, name=STRASSEN)


# --------------------------------------------------------------------------- file format


def _parse_int_row(tokens: List[str], lineno: int, path) -> List[int]:
    out = []
    for tok in tokens:
        try:
            val = int(tok)
        except ValueError:
            raise SchemeParseError(f"expected an integer coefficient, got {tok!r}", lineno, path) from None
        if val not in (-1, 0, 1):
            raise CoefficientRangeError(f"{path}:{lineno}: coefficient {val} is outside {{-1, 0, 1}}")
        out.append(val)
    return out


def parse_scheme_text(text: str, name: str, path=None, validate: bool = True) -> LcmaScheme:
    lines: List[Tuple[int, List[str]]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        lines.append((lineno, stripped.split()))
    if not lines:
        raise SchemeParseError("empty scheme file", None, path)

    lineno, header = lines[0]
    if len(header) != 4:
        raise SchemeParseError(f"header must be 'm k n R', got {' '.join(header)!r}", lineno, path)
    try:
        m, k, n, rank = (int(x) for x in header)
    except ValueError:
        raise SchemeParseError(f"header must hold four integers, got {' '.join(header)!r}", lineno, path) from None
    if min(m, k, n, rank) < 1:
        raise SchemeParseError("header values must be >= 1", lineno, path)

    sections = (("U", m, k), ("V", k, n), ("W", m, n))
    tensors = {label: np.zeros((rank, p, q), dtype=np.int8) for label, p, q in sections}
    pos = 1
    for label, p, q in sections:
        for r in range(1, rank + 1):
            if pos >= len(lines):
                raise SchemeParseError(f"unexpected end of file, expected block '{label} {r}'", lines[-1][0], path)
            lineno, toks = lines[pos]
            if toks != [label, str(r)]:
                raise SchemeParseError(f"expected block header '{label} {r}', got {' '.join(toks)!r}", lineno, path)
            pos += 1
            for row in range(p):
                if pos >= len(lines):
                    raise SchemeParseError(f"block '{label} {r}' is missing rows", lines[-1][0], path)
                lineno, toks = lines[pos]
                if len(toks) != q:
                    raise SchemeParseError(
                        f"block '{label} {r}' row {row + 1} has {len(toks)} entries, expected {q}", lineno, path
                    )
                tensors[label][r - 1, row] = _parse_int_row(toks, lineno, path)
                pos += 1
    if pos != len(lines):
        raise SchemeParseError(f"trailing content: {' '.join(lines[pos][1])!r}", lines[pos][0], path)

    scheme = LcmaScheme(m, k, n, rank, tensors["U"], tensors["V"], tensors["W"], name=name)
    if validate:
        report = validate_scheme(scheme)
        if not report.valid:
            raise SchemeValidationError(name, report)
    return scheme


def load_scheme(path, name: str | None = None, validate: bool = True) -> LcmaScheme:
    """Read a scheme file. Validation is on by default and raises on failure."""
    path = os.fspath(path)
    if name is None:
        name = os.path.splitext(os.path.basename(path))[0]
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return parse_scheme_text(text, name, path=path, validate=validate)


def format_scheme(scheme: LcmaScheme) -> str:
    out = [f"# {scheme.name}", f"{scheme.m} {scheme.k} {scheme.n} {scheme.rank}"]
    for label, t in (("U", scheme.u), ("V", scheme.v), ("W", scheme.w)):
        for r in range(scheme.rank):
            out.append(f"{label} {r + 1}")
            out.extend(" ".join(str(int(x)) for x in row) for row in t[r])
    return "\n".join(out) + "\n"


def save_scheme(scheme: LcmaScheme, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_scheme(scheme))


# --------------------------------------------------------------------------- catalog


@dataclass
class SchemeCatalog:
    entries: Dict[str, LcmaScheme] = field(default_factory=dict)
    provenance: Dict[str, str] = field(default_factory=dict)

    def register(self, scheme: LcmaScheme, source: str = "builtin") -> LcmaScheme:
        report = validate_scheme(scheme)
        if not report.valid:
            raise SchemeValidationError(scheme.name, report)
        self.entries[scheme.name] = scheme
        self.provenance[scheme.name] = source
        return scheme

    def load(self, path, name: str | None = None) -> LcmaScheme:
        scheme = load_scheme(path, name)
        return self.register(scheme, source=os.fspath(path))

    def __getitem__(self, name: str) -> LcmaScheme:
        try:
            return self.entries[name]
        except KeyError:
            known = ", ".join(sorted(self.entries)) or "none"
            raise KeyError(f"unknown scheme {name!r} (known: {known})") from None

    def __contains__(self, name) -> bool:
        return name in self.entries

    def __iter__(self) -> Iterator[LcmaScheme]:
        return (self.entries[k] for k in sorted(self.entries))

    def __len__(self) -> int:
        return len(self.entries)

    def subset(self, names) -> "SchemeCatalog":
        out = SchemeCatalog()
        for name in names:
            out.entries[name] = self[name]
            out.provenance[name] = self.provenance[name]
        return out

    def revalidate(self) -> bool:
        return all(validate_scheme(s).valid for s in self.entries.values())


def _bundled_text(filename: str) -> str:
    return resources.files("lcma").joinpath("data").joinpath(filename).read_text(encoding="utf-8")


def builtin_catalog() -> SchemeCatalog:
    catalog = SchemeCatalog()
    catalog.register(standard_scheme(2, 2, 2))
    strassen = catalog.register(strassen_scheme())
    try:
        laderman = parse_scheme_text(_bundled_text(_LADERMAN_FILE), LADERMAN, path=_LADERMAN_FILE)
    except (OSError, LcmaError, SchemeShapeError) as exc:
        raise LcmaError(f"bundled scheme {LADERMAN!r} failed to load: {exc}") from exc
    catalog.register(laderman, source=f"builtin:{_LADERMAN_FILE}")
    catalog.register(compose(strassen, strassen, name=STRASSEN2))
    return catalog


def list_schemes(catalog: SchemeCatalog) -> List[Tuple[str, int, int, int, int, Tuple[int, int, int]]]:
    return [(s.name, s.m, s.k, s.n, s.rank, s.nnz) for s in catalog]
