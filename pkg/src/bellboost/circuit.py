"""Circuit representation, text format and noise bookkeeping.

Instructions follow a small line-based text format::

    # bellboost circuit v1
    QUBITS 4
    R 0 1
    X_ERROR(0.001) 0 1
    CX 0 1
    DEPOLARIZE2(0.001) 0 1
    M 0 1
    MPP X0*X1 Z0*Z1
    DETECTOR basis=Z coords=0,0,1 rec[0] rec[1]
    OBSERVABLE XX basis=X rec[2]

Measurement records are numbered from zero in the order produced (``M``,
``MX`` give one record per target, ``MPP`` one per product).  Detectors and
observables come after the instructions and may only reference records that
exist.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field

import numpy as np

from .pauli import PauliString

HEADER = "# bellboost circuit v1"

GATES_1Q = {"H", "S"}
GATES_2Q = {"CX", "CZ"}
RESETS = {"R", "RX"}
MEASURES = {"M", "MX"}
NOISE_1Q = {"X_ERROR", "Y_ERROR", "Z_ERROR", "DEPOLARIZE1"}
NOISE_2Q = {"DEPOLARIZE2"}
NOISE = NOISE_1Q | NOISE_2Q
ALL_OPS = GATES_1Q | GATES_2Q | RESETS | MEASURES | NOISE | {"MPP", "TICK"}

_PAULI_LABELS = ("I", "X", "Y", "Z")


@dataclass(frozen=True)
class Instruction:
    """One circuit operation.

    ``targets`` holds qubit indices, except for ``MPP`` where ``products``
    holds one tuple of ``(letter, qubit)`` factors per measured product.
    """

    name: str
    targets: tuple[int, ...] = ()
    arg: float | None = None
    products: tuple[tuple[tuple[str, int], ...], ...] = ()

    @property
    def n_records(self) -> int:
        if self.name in MEASURES:
            return len(self.targets)
        if self.name == "MPP":
            return len(self.products)
        return 0

    def to_line(self) -> str:
        head = self.name if self.arg is None else f"{self.name}({self.arg!r})"
        if self.name == "MPP":
            body = " ".join("*".join(f"{p}{q}" for p, q in prod) for prod in self.products)
        else:
            body = " ".join(str(t) for t in self.targets)
        return f"{head} {body}".rstrip()


@dataclass(frozen=True)
class Detector:
    records: tuple[int, ...]
    basis: str = ""
    coords: tuple[float, ...] = ()

    def to_line(self) -> str:
        parts = ["DETECTOR"]
        if self.basis:
            parts.append(f"basis={self.basis}")
        if self.coords:
            parts.append("coords=" + ",".join(_fmt_num(c) for c in self.coords))
        parts += [f"rec[{r}]" for r in self.records]
        return " ".join(parts)


@dataclass(frozen=True)
class Observable:
    name: str
    records: tuple[int, ...]
    basis: str = ""

    def to_line(self) -> str:
        parts = ["OBSERVABLE", self.name]
        if self.basis:
            parts.append(f"basis={self.basis}")
        parts += [f"rec[{r}]" for r in self.records]
        return " ".join(parts)


def _fmt_num(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


@dataclass(frozen=True)
class Circuit:
    n_qubits: int
    instructions: tuple[Instruction, ...] = ()
    detectors: tuple[Detector, ...] = ()
    observables: tuple[Observable, ...] = ()

    @property
    def n_measurements(self) -> int:
        return sum(ins.n_records for ins in self.instructions)

    @property
    def n_detectors(self) -> int:
        return len(self.detectors)

    def observable_names(self) -> list[str]:
        return [o.name for o in self.observables]

    def count(self, name: str) -> int:
        """Number of gate applications (targets or pairs) of the named operation."""
        total = 0
        for ins in self.instructions:
            if ins.name == name:
                total += len(ins.targets) // (2 if name in GATES_2Q | NOISE_2Q else 1)
        return total


# ---------------------------------------------------------------------------
# building


class CircuitBuilder:
    """Mutable helper that appends instructions and tracks measurement records."""

    def __init__(self, n_qubits: int = 0):
        self.n_qubits = n_qubits
        self.instructions: list[Instruction] = []
        self.detectors: list[Detector] = []
        self.observables: list[Observable] = []
        self.n_records = 0

    def add_qubits(self, count: int) -> list[int]:
        start = self.n_qubits
        self.n_qubits += count
        return list(range(start, start + count))

    def append(self, name: str, targets=(), arg: float | None = None) -> list[int]:
        """Append an instruction; returns the record indices it produces."""
        targets = tuple(int(t) for t in targets)
        if name in NOISE and (arg is None or arg == 0):
            return []
        if not targets and name != "TICK":
            return []
        ins = Instruction(name, targets, None if arg is None else float(arg))
        self.instructions.append(ins)
        recs = list(range(self.n_records, self.n_records + ins.n_records))
        self.n_records += ins.n_records
        return recs

    def mpp(self, products) -> list[int]:
        prods = tuple(tuple((p.upper(), int(q)) for p, q in prod) for prod in products)
        if not prods:
            return []
        ins = Instruction("MPP", (), None, prods)
        self.instructions.append(ins)
        recs = list(range(self.n_records, self.n_records + len(prods)))
        self.n_records += len(prods)
        return recs

    def tick(self) -> None:
        if self.instructions and self.instructions[-1].name != "TICK":
            self.instructions.append(Instruction("TICK"))

    def detector(self, records, basis: str = "", coords=()) -> None:
        self.detectors.append(Detector(tuple(sorted(records)), basis, tuple(coords)))

    def observable(self, name: str, records, basis: str = "") -> None:
        self.observables.append(Observable(name, tuple(sorted(records)), basis))

    def build(self) -> Circuit:
        return Circuit(
            self.n_qubits,
            tuple(self.instructions),
            tuple(self.detectors),
            tuple(self.observables),
        )


# ---------------------------------------------------------------------------
# noise


@dataclass(frozen=True)
class NoiseModel:
    """Circuit-level noise strengths.

    ``p`` applies to every local reset, measurement and gate; ``p_bell`` is
    the depolarizing strength on one arm of each shared Bell pair.  Idle
    noise is off unless ``idling_enabled``.
    """

    p: float = 0.0
    p_bell: float = 0.0
    idling_enabled: bool = False
    idle_p: float = 0.0

    def __post_init__(self):
        for name in ("p", "p_bell", "idle_p"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")

    @classmethod
    def noiseless(cls) -> "NoiseModel":
        return cls(0.0, 0.0)


@dataclass(frozen=True)
class Channel:
    """An independent noise channel: with probability ``sum(probs)`` exactly one
    of the Pauli ``components`` (acting on ``qubits``) fires."""

    instruction: int
    qubits: tuple[int, ...]
    probs: tuple[float, ...]
    components: tuple[str, ...]  # one letter per qubit, e.g. "XZ"

    @property
    def total(self) -> float:
        return float(sum(self.probs))


def _channel_components(name: str, p: float) -> tuple[tuple[str, ...], tuple[float, ...]]:
    if name == "X_ERROR":
        return ("X",), (p,)
    if name == "Y_ERROR":
        return ("Y",), (p,)
    if name == "Z_ERROR":
        return ("Z",), (p,)
    if name == "DEPOLARIZE1":
        return ("X", "Y", "Z"), (p / 3,) * 3
    if name == "DEPOLARIZE2":
        comps = tuple(a + b for a, b in itertools.product(_PAULI_LABELS, repeat=2) if a + b != "II")
        return comps, (p / 15,) * 15
    raise ValueError(f"{name} is not a noise channel")


def circuit_channels(c: Circuit) -> list[Channel]:
    """Enumerate every noise channel in instruction order."""
    out = []
    for i, ins in enumerate(c.instructions):
        if ins.name not in NOISE:
            continue
        comps, probs = _channel_components(ins.name, ins.arg)
        width = 2 if ins.name in NOISE_2Q else 1
        for j in range(0, len(ins.targets), width):
            out.append(Channel(i, ins.targets[j:j + width], probs, comps))
    return out


# ---------------------------------------------------------------------------
# text format


class CircuitParseError(ValueError):
    def __init__(self, line_no: int, line: str, msg: str):
        super().__init__(f"line {line_no}: {msg}: {line.strip()!r}")
        self.line_no = line_no


def serialize(c: Circuit) -> str:
    lines = [HEADER, f"QUBITS {c.n_qubits}"]
    lines += [ins.to_line() for ins in c.instructions]
    lines += [d.to_line() for d in c.detectors]
    lines += [o.to_line() for o in c.observables]
    return "\n".join(lines) + "\n"


_HEAD_RE = re.compile(r"^([A-Z_0-9]+)(?:\(([^)]*)\))?$")
_REC_RE = re.compile(r"^rec\[(-?\d+)\]$")
_MPP_RE = re.compile(r"^([XYZ])(\d+)$")


def parse(text: str) -> Circuit:
    """Parse the text format; errors name the offending line."""
    n_qubits = None
    instructions: list[Instruction] = []
    detectors: list[Detector] = []
    observables: list[Observable] = []
    n_records = 0
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        m = _HEAD_RE.match(tokens[0])
        if not m:
            raise CircuitParseError(line_no, raw, "malformed instruction name")
        name, arg_text = m.group(1), m.group(2)
        args = tokens[1:]
        if name == "QUBITS":
            if n_qubits is not None or len(args) != 1 or not args[0].isdigit():
                raise CircuitParseError(line_no, raw, "QUBITS must appear once with a count")
            n_qubits = int(args[0])
            continue
        if n_qubits is None:
            raise CircuitParseError(line_no, raw, "QUBITS declaration must come first")
        if name in ("DETECTOR", "OBSERVABLE"):
            obs_name = None
            if name == "OBSERVABLE":
                if not args:
                    raise CircuitParseError(line_no, raw, "observable needs a name")
                obs_name, args = args[0], args[1:]
            basis, coords, recs = "", (), []
            for tok in args:
                if tok.startswith("basis="):
                    basis = tok[6:]
                elif tok.startswith("coords="):
                    try:
                        coords = tuple(float(v) for v in tok[7:].split(","))
                    except ValueError:
                        raise CircuitParseError(line_no, raw, "bad coordinates") from None
                else:
                    rm = _REC_RE.match(tok)
                    if not rm:
                        raise CircuitParseError(line_no, raw, f"unexpected token {tok!r}")
                    r = int(rm.group(1))
                    if not 0 <= r < n_records:
                        raise CircuitParseError(
                            line_no, raw, f"dangling record index rec[{r}] ({n_records} records exist)"
                        )
                    recs.append(r)
            if name == "DETECTOR":
                detectors.append(Detector(tuple(sorted(recs)), basis, coords))
            else:
                observables.append(Observable(obs_name, tuple(sorted(recs)), basis))
            continue
        if detectors or observables:
            raise CircuitParseError(line_no, raw, "instructions must precede detectors")
        if name not in ALL_OPS:
            raise CircuitParseError(line_no, raw, f"unknown instruction {name!r}")
        arg = None
        if arg_text is not None:
            try:
                arg = float(arg_text)
            except ValueError:
                raise CircuitParseError(line_no, raw, "bad argument") from None
        if name in NOISE:
            if arg is None or not 0.0 <= arg <= 1.0:
                raise CircuitParseError(line_no, raw, "noise needs a probability in [0, 1]")
        elif arg is not None:
            raise CircuitParseError(line_no, raw, f"{name} takes no argument")
        if name == "MPP":
            prods = []
            for tok in args:
                factors = []
                for f in tok.split("*"):
                    fm = _MPP_RE.match(f)
                    if not fm or int(fm.group(2)) >= n_qubits:
                        raise CircuitParseError(line_no, raw, f"bad Pauli product {tok!r}")
                    factors.append((fm.group(1), int(fm.group(2))))
                prods.append(tuple(factors))
            ins = Instruction("MPP", (), None, tuple(prods))
        else:
            try:
                targets = tuple(int(t) for t in args)
            except ValueError:
                raise CircuitParseError(line_no, raw, "targets must be integers") from None
            if any(not 0 <= t < n_qubits for t in targets):
                raise CircuitParseError(line_no, raw, "qubit index out of range")
            if name in GATES_2Q | NOISE_2Q and len(targets) % 2:
                raise CircuitParseError(line_no, raw, "two-qubit operation needs target pairs")
            ins = Instruction(name, targets, arg)
        instructions.append(ins)
        n_records += ins.n_records
    return Circuit(n_qubits or 0, tuple(instructions), tuple(detectors), tuple(observables))


# ---------------------------------------------------------------------------
# exact simulation


def _pauli_on(n: int, factors) -> PauliString:
    x = np.zeros(n, bool)
    z = np.zeros(n, bool)
    for letter, q in factors:
        if letter in ("X", "Y"):
            x[q] ^= True
        if letter in ("Z", "Y"):
            z[q] ^= True
    return PauliString(x, z)


@dataclass
class TableauRun:
    records: np.ndarray  # measured bits
    forms: list | None  # per record symbol dependence (symbolic runs only)


def run_tableau(c: Circuit, rng=None, faults: dict[int, str] | None = None, symbolic: bool = False,
                sample_noise: bool = False) -> TableauRun:
    """Simulate ``c`` exactly with a stabilizer tableau.

    ``faults`` maps channel index (see :func:`circuit_channels`) to the Pauli
    component to apply there.  With ``sample_noise`` every channel is sampled
    from its probabilities instead.  Otherwise channels are idle.
    """
    from .tableau import StabilizerTableau

    rng = rng if rng is not None else np.random.default_rng(0)
    n_sym = sum(1 for ins in c.instructions for _ in range(max(ins.n_records, 0)))
    n_sym += sum(len(ins.targets) for ins in c.instructions if ins.name in RESETS)
    t = StabilizerTableau(c.n_qubits, rng=rng, symbols=n_sym if symbolic else 0)
    n = c.n_qubits
    records: list[int] = []
    forms: list = []
    faults = dict(faults or {})
    chan = 0
    for ins in c.instructions:
        name = ins.name
        if name == "TICK":
            continue
        if name in GATES_1Q or name in GATES_2Q:
            t.apply_gate(name, list(ins.targets))
        elif name == "R":
            for q in ins.targets:
                t.reset_z(q)
        elif name == "RX":
            for q in ins.targets:
                t.reset_x(q)
        elif name in MEASURES:
            letter = "Z" if name == "M" else "X"
            for q in ins.targets:
                r = t.measure(_pauli_on(n, [(letter, q)]))
                records.append(r.outcome)
                forms.append(r.form)
        elif name == "MPP":
            for prod in ins.products:
                r = t.measure(_pauli_on(n, prod))
                records.append(r.outcome)
                forms.append(r.form)
        elif name in NOISE:
            comps, probs = _channel_components(name, ins.arg)
            width = 2 if name in NOISE_2Q else 1
            for j in range(0, len(ins.targets), width):
                qs = ins.targets[j:j + width]
                comp = faults.get(chan)
                if comp is None and sample_noise and rng.random() < sum(probs):
                    comp = comps[rng.choice(len(comps), p=np.array(probs) / sum(probs))]
                if comp is not None:
                    t.apply_pauli(_pauli_on(n, [(l, q) for l, q in zip(comp, qs) if l != "I"]))
                chan += 1
        else:
            raise ValueError(f"cannot simulate {name}")
    return TableauRun(np.array(records, dtype=np.uint8), forms if symbolic else None)


@dataclass
class DeterminismReport:
    bad_detectors: list[int]
    bad_observables: list[str]
    detector_reference: np.ndarray
    observable_reference: np.ndarray

    @property
    def ok(self) -> bool:
        return not self.bad_detectors and not self.bad_observables


def validate_detectors(c: Circuit) -> DeterminismReport:
    """Certify that every detector and observable is deterministic without noise.

    Runs one symbolic tableau simulation; a parity is deterministic exactly
    when its dependence on random measurement outcomes cancels.
    """
    run = run_tableau(c, symbolic=True)

    def check(recs):
        if not recs:
            return True, 0
        form = np.bitwise_xor.reduce(np.stack([run.forms[r] for r in recs]), axis=0)
        return not np.any(form), int(np.bitwise_xor.reduce(run.records[list(recs)]))

    bad_d, ref_d = [], []
    for i, d in enumerate(c.detectors):
        ok, v = check(d.records)
        if not ok:
            bad_d.append(i)
        ref_d.append(v)
    bad_o, ref_o = [], []
    for o in c.observables:
        ok, v = check(o.records)
        if not ok:
            bad_o.append(o.name)
        ref_o.append(v)
    return DeterminismReport(bad_d, bad_o, np.array(ref_d, np.uint8), np.array(ref_o, np.uint8))
