"""JSON file formats: arrays, channels, measurement round-trips, MLT generators, solve reports."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .channel import SparseChannel
from .geometry import SensingMatrix, compose_sensing
from .measurement import MeasurementOperator, Observation, PilotMatrix, build_operator
from .mlt import MLTGenerator


class FormatError(ValueError):
    pass


def encode_complex(a) -> dict:
    """Base-16 encoding of a complex128 array (little endian) with its shape."""
    a = np.ascontiguousarray(np.asarray(a, dtype="<c16"))
    return {"shape": list(a.shape), "hex": a.tobytes().hex()}


def decode_complex(obj: dict) -> np.ndarray:
    try:
        raw = bytes.fromhex(obj["hex"])
        return np.frombuffer(raw, dtype="<c16").reshape(obj["shape"]).copy()
    except (KeyError, ValueError, TypeError) as exc:
        raise FormatError(f"bad encoded array: {exc}") from exc


def read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc


def write_json(path, data) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2))


def save_channel(path, ch: SparseChannel) -> None:
    write_json(path, ch.to_dict())


def load_channel(path) -> SparseChannel:
    try:
        return SparseChannel.from_dict(read_json(path))
    except (KeyError, TypeError) as exc:
        raise FormatError(f"bad channel file {path}: {exc}") from exc


def measurement_to_dict(tx: SensingMatrix, rx: SensingMatrix, pilot: PilotMatrix,
                        obs: Observation) -> dict:
    return {
        "tx": tx.to_dict(),
        "rx": rx.to_dict(),
        "pilot": {"alphabet": pilot.alphabet, "entries": encode_complex(pilot.entries)},
        "y": encode_complex(obs.y),
        "noise_variance": obs.noise_variance,
        "snr_db": obs.snr_db,
    }


def measurement_from_dict(data: dict) -> tuple[MeasurementOperator, Observation]:
    try:
        tx = SensingMatrix.from_dict(data["tx"])
        rx = SensingMatrix.from_dict(data["rx"])
        pilot = PilotMatrix(decode_complex(data["pilot"]["entries"]), data["pilot"].get("alphabet", "custom"))
        op = build_operator(pilot, compose_sensing(tx, rx), rx.n)
        obs = Observation(decode_complex(data["y"]), float(data.get("noise_variance", 0.0)),
                          data.get("snr_db"))
    except (KeyError, TypeError) as exc:
        raise FormatError(f"bad measurement file: {exc}") from exc
    if obs.y.shape != (op.L,):
        raise FormatError(f"observation length {obs.y.shape} does not match operator rows {op.L}")
    return op, obs


def save_measurement(path, tx, rx, pilot, obs) -> None:
    write_json(path, measurement_to_dict(tx, rx, pilot, obs))


def load_measurement(path) -> tuple[MeasurementOperator, Observation]:
    return measurement_from_dict(read_json(path))


def generator_to_dict(gen: MLTGenerator) -> dict:
    return {"dims": list(gen.dims.dims), "records": [[list(lag), re, im] for lag, re, im in gen.records()]}


def generator_from_dict(data: dict) -> MLTGenerator:
    try:
        records = [(tuple(lag), float(re), float(im)) for lag, re, im in data["records"]]
        return MLTGenerator.from_records(data["dims"], records)
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"bad generator file: {exc}") from exc


def save_generator(path, gen: MLTGenerator) -> None:
    write_json(path, generator_to_dict(gen))


def load_generator(path) -> MLTGenerator:
    return generator_from_dict(read_json(path))


def write_frequency_csv(path, freqs: np.ndarray, values: np.ndarray | None = None,
                        value_name: str = "weight") -> None:
    """One row per atom: f1..fd followed by a weight (real) or gain (re, im) column."""
    freqs = np.atleast_2d(freqs)
    d = freqs.shape[0]
    header = [f"f{i + 1}" for i in range(d)]
    complex_values = values is not None and np.iscomplexobj(values)
    if values is not None:
        header += [f"{value_name}_re", f"{value_name}_im"] if complex_values else [value_name]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for k in range(freqs.shape[1]):
            row = [repr(float(x)) for x in freqs[:, k]]
            if values is not None:
                v = values[k]
                row += [repr(float(v.real)), repr(float(v.imag))] if complex_values else [repr(float(v))]
            w.writerow(row)
