"""Molecular structure I/O: V2000 SDF parsing, JSONL interchange, node
featurization, and dataset splitting.

A molecule is a `Graph3D`: atoms with 3D coordinates, an undirected bond
list, optional node features and a scalar target. Parsing never raises on
a bad record; failures are reported per record and the record is skipped.
"""
from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, GraphError

# Symbols indexed by atomic number - 1 (Z = 1..92 covers every organic dataset
# we ingest; exotic elements fail the record with an explicit message).
_ELEMENTS = (
    "H He Li Be B C N O F Ne Na Mg Al Si P S Cl Ar K Ca Sc Ti V Cr Mn Fe Co "
    "Ni Cu Zn Ga Ge As Se Br Kr Rb Sr Y Zr Nb Mo Tc Ru Rh Pd Ag Cd In Sn Sb "
    "Te I Xe Cs Ba La Ce Pr Nd Pm Sm Eu Gd Tb Dy Ho Er Tm Yb Lu Hf Ta W Re "
    "Os Ir Pt Au Hg Tl Pb Bi Po At Rn Fr Ra Ac Th Pa U"
).split()
ATOMIC_NUMBERS = {s: i + 1 for i, s in enumerate(_ELEMENTS)}


def _normalize_symbol(sym: str) -> str:
    sym = sym.strip()
    return sym[:1].upper() + sym[1:].lower()


@dataclass
class Atom:
    element: str
    atomic_number: int
    position: np.ndarray  # (3,) float64, Ångström

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64)
        if self.atomic_number < 1:
            raise GraphError(f"atomic_number must be >= 1, got {self.atomic_number}")
        if self.position.shape != (3,) or not np.all(np.isfinite(self.position)):
            raise GraphError(f"bad position for {self.element}: {self.position}")


@dataclass
class Graph3D:
    atoms: list[Atom]
    bonds: list[tuple[int, int]]
    node_features: np.ndarray | None = None
    target: float | None = None
    mol_id: str = ""
    bond_orders: list[int] | None = None
    props: dict[str, str] = field(default_factory=dict)

    @property
    def n_atoms(self) -> int:
        return len(self.atoms)

    @property
    def positions(self) -> np.ndarray:
        return np.array([a.position for a in self.atoms], dtype=np.float64).reshape(-1, 3)

    def validate(self) -> None:
        n = self.n_atoms
        seen: set[tuple[int, int]] = set()
        for i, j in self.bonds:
            if not (0 <= i < n and 0 <= j < n):
                raise GraphError(f"bond ({i},{j}) out of range for {n} atoms")
            if i == j:
                raise GraphError(f"self-loop bond at atom {i}")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise GraphError(f"duplicate bond {key}")
            seen.add(key)
        if self.node_features is not None and self.node_features.shape[0] != n:
            raise GraphError(
                f"node_features has {self.node_features.shape[0]} rows for {n} atoms"
            )

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n_atoms, dtype=np.int64)
        for i, j in self.bonds:
            deg[i] += 1
            deg[j] += 1
        return deg


@dataclass
class RecordError:
    record_index: int
    mol_id: str
    message: str

    def __str__(self):  # pragma: no cover - cosmetic
        label = self.mol_id or f"record {self.record_index}"
        return f"[record {self.record_index}] {label}: {self.message}"


# ---------------------------------------------------------------------------
# V2000 SDF
# ---------------------------------------------------------------------------

def _parse_record(lines: list[str], idx: int) -> Graph3D:
    if len(lines) < 4:
        raise GraphError("record too short for a header block")
    title = lines[0].strip()
    counts = lines[3]
    try:
        n_atoms = int(counts[0:3])
        n_bonds = int(counts[3:6])
    except ValueError:
        raise GraphError(f"malformed counts line: {counts!r}") from None
    if n_atoms < 0 or n_bonds < 0:
        raise GraphError(f"malformed counts line: {counts!r}")
    if len(lines) < 4 + n_atoms + n_bonds:
        raise GraphError(
            f"truncated record: counts say {n_atoms} atoms / {n_bonds} bonds"
        )

    atoms: list[Atom] = []
    for k in range(n_atoms):
        line = lines[4 + k]
        try:
            x = float(line[0:10])
            y = float(line[10:20])
            z = float(line[20:30])
        except ValueError:
            raise GraphError(f"non-numeric coordinate on atom line {k + 1}: {line!r}") from None
        sym = _normalize_symbol(line[31:34])
        if sym not in ATOMIC_NUMBERS:
            raise GraphError(f"unknown element symbol {sym!r} on atom line {k + 1}")
        atoms.append(Atom(sym, ATOMIC_NUMBERS[sym], np.array([x, y, z])))

    bonds: list[tuple[int, int]] = []
    orders: list[int] = []
    for k in range(n_bonds):
        line = lines[4 + n_atoms + k]
        try:
            a = int(line[0:3])
            b = int(line[3:6])
            order = int(line[6:9]) if line[6:9].strip() else 1
        except ValueError:
            raise GraphError(f"malformed bond line {k + 1}: {line!r}") from None
        if not (1 <= a <= n_atoms and 1 <= b <= n_atoms):
            raise GraphError(
                f"bond line {k + 1} references atom outside 1..{n_atoms}: {line!r}"
            )
        bonds.append((a - 1, b - 1))
        orders.append(order)

    # data items: "> <NAME>" then value lines until a blank line
    props: dict[str, str] = {}
    i = 4 + n_atoms + n_bonds
    while i < len(lines):
        line = lines[i]
        if line.startswith(">"):
            name = line[line.find("<") + 1 : line.rfind(">")] if "<" in line else ""
            vals = []
            i += 1
            while i < len(lines) and lines[i].strip() != "":
                vals.append(lines[i].rstrip("\n"))
                i += 1
            if name:
                props[name] = "\n".join(vals).strip()
        i += 1

    g = Graph3D(atoms, bonds, mol_id=title or f"record_{idx}",
                bond_orders=orders, props=props)
    g.validate()
    return g


def parse_sdf(data: bytes | str, errors: list[RecordError] | None = None) -> list[Graph3D]:
    """Parse a multi-record V2000 SDF stream.

    Bad records are skipped; each failure is appended to `errors` (when a
    list is supplied) and emitted as a warning, never silently dropped.
    """
    if isinstance(data, bytes):
        text = data.decode("utf-8", errors="replace")
    else:
        text = data
    molecules: list[Graph3D] = []
    record: list[str] = []
    idx = 0

    def flush(rec: list[str]):
        nonlocal idx
        if not any(line.strip() for line in rec):
            return
        try:
            molecules.append(_parse_record(rec, idx))
        except GraphError as exc:
            err = RecordError(idx, rec[0].strip() if rec else "", str(exc))
            if errors is not None:
                errors.append(err)
            warnings.warn(f"skipping unparsable SDF record: {err}", stacklevel=2)
        idx += 1

    for line in text.splitlines():
        if line.strip() == "$$$$":
            flush(record)
            record = []
        else:
            record.append(line)
    flush(record)
    return molecules


def load_sdf(path, errors: list[RecordError] | None = None) -> list[Graph3D]:
    with open(path, "rb") as fh:
        return parse_sdf(fh.read(), errors=errors)


# ---------------------------------------------------------------------------
# JSONL interchange
# ---------------------------------------------------------------------------

def to_json_obj(g: Graph3D) -> dict:
    obj = {
        "id": g.mol_id,
        "atoms": [{"element": a.element, "xyz": list(map(float, a.position))}
                  for a in g.atoms],
        "bonds": [[int(i), int(j)] for i, j in g.bonds],
        "target": None if g.target is None else float(g.target),
    }
    if g.bond_orders is not None:
        obj["bond_orders"] = list(map(int, g.bond_orders))
    if g.props:
        obj["props"] = dict(g.props)
    return obj


def from_json_obj(obj: dict) -> Graph3D:
    atoms = []
    for a in obj["atoms"]:
        sym = _normalize_symbol(a["element"])
        if sym not in ATOMIC_NUMBERS:
            raise GraphError(f"unknown element symbol {sym!r}")
        atoms.append(Atom(sym, ATOMIC_NUMBERS[sym], np.asarray(a["xyz"], dtype=np.float64)))
    g = Graph3D(
        atoms=atoms,
        bonds=[(int(i), int(j)) for i, j in obj["bonds"]],
        target=obj.get("target"),
        mol_id=obj.get("id", ""),
        bond_orders=list(obj["bond_orders"]) if "bond_orders" in obj else None,
        props=dict(obj.get("props", {})),
    )
    g.validate()
    return g


def save_jsonl(path, molecules: Iterable[Graph3D]) -> int:
    n = 0
    with open(path, "w") as fh:
        for g in molecules:
            fh.write(json.dumps(to_json_obj(g)) + "\n")
            n += 1
    return n


def load_jsonl(path) -> list[Graph3D]:
    out = []
    with open(path) as fh:
        for line in fh:
            if line.strip():
                out.append(from_json_obj(json.loads(line)))
    return out


def attach_targets(molecules: Sequence[Graph3D], sdf_field: str | None = None,
                   csv_path=None) -> int:
    """Fill `target` from an SDF data field or a (id,target) CSV sidecar.

    Returns the number of molecules that received a target; molecules
    without one keep target=None and trigger a warning.
    """
    if (sdf_field is None) == (csv_path is None):
        raise ConfigError("supply exactly one of sdf_field or csv_path")
    table: dict[str, float] = {}
    if csv_path is not None:
        with open(csv_path, newline="") as fh:
            for row in csv.DictReader(fh):
                table[row["id"]] = float(row["target"])
    n = 0
    for g in molecules:
        raw = g.props.get(sdf_field) if sdf_field is not None else table.get(g.mol_id)
        if raw is None:
            warnings.warn(f"no target for molecule {g.mol_id!r}", stacklevel=2)
            continue
        try:
            g.target = float(raw)
        except ValueError:
            warnings.warn(f"non-numeric target {raw!r} for {g.mol_id!r}", stacklevel=2)
            continue
        n += 1
    return n


# ---------------------------------------------------------------------------
# Featurization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FeatureScheme:
    """One-hot element encoding plus bond degree.

    The vocabulary is fitted on the training partition and ordered by
    atomic number. Elements outside the vocabulary map to the reserved
    unknown encoding (the all-zero one-hot block) with a warning, so the
    feature dimension stays fixed at len(vocabulary) + 1.
    """

    vocabulary: tuple[str, ...]
    scheme_id: str = "element-onehot-degree"

    @classmethod
    def fit(cls, graphs: Sequence[Graph3D]) -> "FeatureScheme":
        elements = {a.element for g in graphs for a in g.atoms}
        vocab = tuple(sorted(elements, key=lambda s: ATOMIC_NUMBERS[s]))
        if not vocab:
            raise ConfigError("cannot fit a feature scheme on an empty dataset")
        return cls(vocab)

    @property
    def dim(self) -> int:
        return len(self.vocabulary) + 1

    def to_dict(self) -> dict:
        return {"scheme_id": self.scheme_id, "vocabulary": list(self.vocabulary)}

    @classmethod
    def from_dict(cls, obj: dict) -> "FeatureScheme":
        return cls(tuple(obj["vocabulary"]), obj.get("scheme_id", "element-onehot-degree"))


def featurize_nodes(g: Graph3D, scheme: FeatureScheme) -> Graph3D:
    """Return a copy of `g` with node_features populated per `scheme`."""
    index = {e: k for k, e in enumerate(scheme.vocabulary)}
    x = np.zeros((g.n_atoms, scheme.dim), dtype=np.float64)
    deg = g.degrees()
    for i, atom in enumerate(g.atoms):
        k = index.get(atom.element)
        if k is None:
            warnings.warn(
                f"element {atom.element!r} outside fitted vocabulary "
                f"{scheme.vocabulary}; using the unknown encoding", stacklevel=2)
        else:
            x[i, k] = 1.0
        x[i, -1] = float(deg[i])
    return replace(g, node_features=x)


# ---------------------------------------------------------------------------
# Splits
# ---------------------------------------------------------------------------

@dataclass
class DatasetSplit:
    train: list[Graph3D]
    val: list[Graph3D]
    test: list[Graph3D]

    @property
    def sizes(self) -> tuple[int, int, int]:
        return (len(self.train), len(self.val), len(self.test))


def split_dataset(graphs: Sequence[Graph3D], sizes: tuple[int, int, int],
                  seed: int, explicit: dict[str, list[int]] | None = None
                  ) -> DatasetSplit:
    """Deterministic shuffle-and-partition; `explicit` index lists override."""
    n = len(graphs)
    if explicit is not None:
        parts = {}
        used: set[int] = set()
        for name in ("train", "val", "test"):
            idxs = list(explicit.get(name, []))
            for i in idxs:
                if not 0 <= i < n:
                    raise ConfigError(f"explicit split index {i} out of range 0..{n - 1}")
                if i in used:
                    raise ConfigError(f"index {i} appears in more than one partition")
                used.add(i)
            parts[name] = idxs
        if sizes is not None:
            got = tuple(len(parts[k]) for k in ("train", "val", "test"))
            if got != tuple(sizes):
                raise ConfigError(f"explicit split sizes {got} != configured {tuple(sizes)}")
        return DatasetSplit(*[[graphs[i] for i in parts[k]] for k in ("train", "val", "test")])

    tr, va, te = sizes
    if tr < 0 or va < 0 or te < 0 or tr + va + te > n:
        raise ConfigError(f"split sizes {sizes} incompatible with dataset of {n}")
    perm = np.random.default_rng(seed).permutation(n)
    order = [graphs[i] for i in perm]
    return DatasetSplit(order[:tr], order[tr:tr + va], order[tr + va:tr + va + te])


def default_split_sizes(n: int) -> tuple[int, int, int]:
    """80/10/10 partition when no explicit sizes are configured."""
    val = int(round(n * 0.1))
    test = int(round(n * 0.1))
    return (n - val - test, val, test)
