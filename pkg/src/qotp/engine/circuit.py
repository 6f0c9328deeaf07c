import copy
import logging
from dataclasses import dataclass
from graphlib import CycleError, TopologicalSorter
from pathlib import Path
from typing import Optional, Union

import numpy as np
import yaml
from pydantic import BaseModel, Field, model_validator

from ..qsim import input_index
from ..qsim.pauli import MAX_SET_ORDER
from ..tabler import SharedTable
from ..types import GateG1
from .batch import LoopbackSession
from .gk import TABLE_MODE, GkGateSpec, execute_gk_batch

logger = logging.getLogger("qotp")


class CircuitGate(BaseModel):
    """One gate on named wires. The truth table is Alice's secret."""

    name: str
    inputs: list[str] = Field(min_length=1, max_length=MAX_SET_ORDER)
    output: str
    truth_table: list[int]

    @model_validator(mode="before")
    @classmethod
    def _named_gate(cls, data):
        # `gate: not` is shorthand for a G_1 truth table
        if isinstance(data, dict) and "gate" in data:
            data = dict(data)
            data["truth_table"] = list(GateG1.from_name(data.pop("gate")).truth_table)
            if "input" in data:
                data["inputs"] = [data.pop("input")]
        return data

    @model_validator(mode="after")
    def _table_size(self) -> "CircuitGate":
        if len(self.truth_table) != 2 ** len(self.inputs) or any(b not in (0, 1) for b in self.truth_table):
            raise ValueError(f"Gate {self.name} needs {2 ** len(self.inputs)} truth-table bits")
        return self

    @property
    def k(self) -> int:
        return len(self.inputs)

    def as_g1(self) -> GateG1:
        return GateG1.from_truth_table(self.truth_table)

    def as_gk(self) -> GkGateSpec:
        return GkGateSpec(k=self.k, truth_table=self.truth_table)

    def evaluate(self, bits) -> int:
        return self.truth_table[input_index(bits)]


class CircuitDesc(BaseModel):
    inputs: list[str]
    gates: list[CircuitGate]
    outputs: list[str]

    @model_validator(mode="after")
    def _wiring(self) -> "CircuitDesc":
        drivers = list(self.inputs) + [g.output for g in self.gates]
        duplicates = {w for w in drivers if drivers.count(w) > 1}
        if duplicates:
            raise ValueError(f"Wires driven more than once: {sorted(duplicates)}")
        known = set(drivers)
        for gate in self.gates:
            missing = [w for w in gate.inputs if w not in known]
            if missing:
                raise ValueError(f"Gate {gate.name} reads undriven wires {missing}")
        missing_outputs = [w for w in self.outputs if w not in known]
        if missing_outputs:
            raise ValueError(f"Circuit outputs {missing_outputs} are not driven")
        try:
            self.levels()
        except CycleError as e:
            raise ValueError(f"Circuit has a cycle: {e.args[1]}") from None
        return self

    def levels(self) -> list[list[CircuitGate]]:
        """Gates grouped so that each group only reads wires set by earlier groups."""
        by_output = {g.output: g for g in self.gates}
        sorter = TopologicalSorter(
            {g.output: [w for w in g.inputs if w in by_output] for g in self.gates}
        )
        sorter.prepare()
        levels = []
        while sorter.is_active():
            ready = sorted(sorter.get_ready())
            levels.append([by_output[w] for w in ready])
            sorter.done(*ready)
        return levels

    def internal_wires(self) -> list[str]:
        """Gate outputs consumed by other gates and not exposed as circuit outputs."""
        read = {w for g in self.gates for w in g.inputs}
        return [g.output for g in self.gates if g.output in read and g.output not in self.outputs]

    def evaluate_plain(self, inputs: dict[str, int]) -> dict[str, int]:
        """Ideal evaluation; returns every wire value."""
        wires = {name: int(inputs[name]) for name in self.inputs}
        for level in self.levels():
            for gate in level:
                wires[gate.output] = gate.evaluate([wires[w] for w in gate.inputs])
        return wires


def load_circuit(path: Union[str, Path]) -> CircuitDesc:
    with open(path) as f:
        return CircuitDesc(**yaml.safe_load(f))


def _flip_input(truth_table: list[int], position: int, k: int) -> list[int]:
    mask = 1 << (k - 1 - position)
    return [truth_table[i ^ mask] for i in range(len(truth_table))]


def randomize_circuit(
    circuit: CircuitDesc, rng: np.random.Generator, probability: float = 0.5
) -> CircuitDesc:
    """
    Insert NOT-NOT pairs on internal wires with the given probability, folding
    one NOT into the driving gate's outputs and the other into every reader's
    inputs. The circuit function is unchanged.
    """
    padded = copy.deepcopy(circuit)
    by_output = {g.output: g for g in padded.gates}
    for wire in padded.internal_wires():
        if rng.random() >= probability:
            continue
        driver = by_output[wire]
        driver.truth_table = [b ^ 1 for b in driver.truth_table]
        for reader in padded.gates:
            for position, name in enumerate(reader.inputs):
                if name == wire:
                    reader.truth_table = _flip_input(reader.truth_table, position, reader.k)
    return padded


@dataclass
class CircuitRun:
    wires: dict[str, np.ndarray]
    outputs: dict[str, np.ndarray]
    rounds: int


def evaluate_circuit(
    circuit: CircuitDesc,
    inputs: dict[str, Union[int, np.ndarray]],
    session: LoopbackSession,
    gk_mode: str = TABLE_MODE,
    rng: Optional[np.random.Generator] = None,
) -> CircuitRun:
    """
    Evaluate the circuit over gate-OTPs, level by level. Input values may be
    arrays to run many executions side by side; every G_1 gate of a level
    across all executions goes into one batch.
    """
    rng = rng or session.rng
    wires = {name: np.atleast_1d(np.asarray(inputs[name], dtype=np.uint8)) for name in circuit.inputs}
    runs = len(next(iter(wires.values()))) if wires else 1
    rounds = 0
    for level in circuit.levels():
        g1 = [g for g in level if g.k == 1]
        if g1:
            targets = np.concatenate([np.full(runs, int(g.as_g1()), dtype=np.uint8) for g in g1])
            bits = np.concatenate([wires[g.inputs[0]] for g in g1])
            result = session.run(targets, bits)
            if result.failed.any():
                raise SharedTable.TableExhausted(
                    f"{int(result.failed.sum())} gate evaluations failed: table exhausted"
                )
            rounds += result.rounds_used
            for i, gate in enumerate(g1):
                wires[gate.output] = result.outputs[i * runs : (i + 1) * runs].astype(np.uint8)
        for gate in level:
            if gate.k == 1:
                continue
            xs = np.stack([wires[w] for w in gate.inputs], axis=1)
            wires[gate.output], used = execute_gk_batch(gate.as_gk(), xs, session, gk_mode, rng)
            rounds += used
    logger.debug(f"Evaluated {len(circuit.gates)} gates over {runs} run(s) in {rounds} rounds")
    return CircuitRun(wires=wires, outputs={w: wires[w] for w in circuit.outputs}, rounds=rounds)
