"""Dataset assembly, binary persistence, splitting, and normalization.

A record is a 5x500 matrix: three input rows (VInP, VInM, ClkEval) and
two output rows (DOut1, DOut0), sampled every 2.5 ns over 1250 ns. The
on-disk format is little-endian with 64-bit samples and round-trips
bit-exactly.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from multiprocessing import get_context

import numpy as np

from stiffnet import adcsim, signals as sig
from stiffnet.signals import Pwl, RecordParams

N_INPUT_CHANNELS = 3
N_OUTPUT_CHANNELS = 2
N_SAMPLES = 500
SAMPLE_DT = 2.5e-9
RECORD_DURATION = 1250e-9

ANALOG_RAILS = (0.325, 0.575)  # 0.45 V +/- 0.25/2
LOGIC_RAILS = (0.0, 0.9)
INPUT_RAILS = (ANALOG_RAILS, ANALOG_RAILS, LOGIC_RAILS)
OUTPUT_RAILS = (LOGIC_RAILS, LOGIC_RAILS)

SPLIT_TRAIN, SPLIT_VAL, SPLIT_TEST = 0, 1, 2
SPLIT_NAMES = {"train": SPLIT_TRAIN, "val": SPLIT_VAL, "test": SPLIT_TEST}

MAGIC = b"SCDS"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHIIq")
_PARAMS = struct.Struct("<9dq")
RECORD_BLOCK_BYTES = _PARAMS.size + 1 + (N_INPUT_CHANNELS + N_OUTPUT_CHANNELS) * N_SAMPLES * 8
HEADER_BYTES = _HEADER.size

CSV_COLUMNS = ["t", "VInP", "VInM", "ClkEval", "DOut1", "DOut0"]


class DatasetIOError(IOError):
    """Base for dataset file-format failures."""


class BadMagicError(DatasetIOError):
    pass


class VersionMismatchError(DatasetIOError):
    pass


class TruncatedFileError(DatasetIOError):
    pass


class GenerationError(RuntimeError):
    """Record synthesis failed; carries the offending record index."""

    def __init__(self, record_index: int, cause: Exception):
        super().__init__(f"record {record_index}: {cause}")
        self.record_index = record_index


@dataclass(frozen=True)
class GenConfig:
    """Knobs of the synthesis pipeline that are shared by every record."""

    channel_cutoff_hz: float = 175e6
    prbs_register_length: int = 7
    fine_dt: float = 0.25e-9

    def __post_init__(self):
        steps = SAMPLE_DT / self.fine_dt
        if abs(steps - round(steps)) > 1e-9:
            raise ValueError(
                f"fine_dt {self.fine_dt} must divide the {SAMPLE_DT} sample spacing"
            )
        if self.channel_cutoff_hz <= 0:
            raise ValueError("channel cutoff must be positive")


@dataclass
class Record:
    inputs: np.ndarray   # (3, 500): VInP, VInM, ClkEval
    outputs: np.ndarray  # (2, 500): DOut1, DOut0
    params: RecordParams

    def __post_init__(self):
        self.inputs = np.ascontiguousarray(self.inputs, dtype=np.float64)
        self.outputs = np.ascontiguousarray(self.outputs, dtype=np.float64)
        if self.inputs.shape != (N_INPUT_CHANNELS, N_SAMPLES):
            raise ValueError(f"inputs shape {self.inputs.shape} != (3, {N_SAMPLES})")
        if self.outputs.shape != (N_OUTPUT_CHANNELS, N_SAMPLES):
            raise ValueError(f"outputs shape {self.outputs.shape} != (2, {N_SAMPLES})")

    @property
    def matrix(self) -> np.ndarray:
        """All five rows stacked, shape (5, 500)."""
        return np.vstack([self.inputs, self.outputs])


@dataclass
class Dataset:
    records: list[Record]
    split: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.uint8))
    master_seed: int = 0

    def __post_init__(self):
        if self.split.size == 0:
            self.split = np.zeros(len(self.records), dtype=np.uint8)
        self.split = np.asarray(self.split, dtype=np.uint8)
        if self.split.shape != (len(self.records),):
            raise ValueError("split labels must cover every record exactly once")

    def __len__(self) -> int:
        return len(self.records)

    def indices(self, split: str | None = None) -> np.ndarray:
        if split is None:
            return np.arange(len(self.records))
        return np.flatnonzero(self.split == SPLIT_NAMES[split])

    def inputs_array(self, indices=None) -> np.ndarray:
        if indices is None:
            indices = range(len(self.records))
        return np.stack([self.records[i].inputs for i in indices])

    def outputs_array(self, indices=None) -> np.ndarray:
        if indices is None:
            indices = range(len(self.records))
        return np.stack([self.records[i].outputs for i in indices])


# -- synthesis ----------------------------------------------------------------


def build_record(master_seed: int, index: int, config: GenConfig = GenConfig()) -> Record:
    """Run the full per-record pipeline: params -> stimulus -> ADC -> decimate."""
    params = sig.sample_params(master_seed, index)
    n_bits = int(np.ceil(RECORD_DURATION / params.bit_time)) + 2
    prbs_seed = params.rng_seed % ((1 << config.prbs_register_length) - 1) + 1
    bits = sig.gen_prbs(sig.PrbsConfig(config.prbs_register_length, prbs_seed, n_bits))
    logical = sig.bits_to_pwl(bits, params.bit_time, params.rise_time,
                              params.fall_time, v_lo=-0.5, v_hi=0.5)

    n_fine = int(round(RECORD_DURATION / config.fine_dt))
    t_fine = np.arange(n_fine) * config.fine_dt
    filtered = sig.channel_filter(logical.sample(t_fine), config.fine_dt,
                                  config.channel_cutoff_hz)
    vin_p, vin_m = sig.differential_pair(Pwl(t_fine, filtered), params.v_cm, params.v_dm)
    clk = sig.gen_clock(params, RECORD_DURATION)

    d1, d0 = adcsim.simulate_record(vin_p, vin_m, clk, params,
                                    fine_dt=config.fine_dt, duration=RECORD_DURATION)

    decim = int(round(SAMPLE_DT / config.fine_dt))
    take = slice(0, n_fine, decim)
    inputs = np.stack([vin_p.sample(t_fine)[take], vin_m.sample(t_fine)[take],
                       clk.sample(t_fine)[take]])
    outputs = np.stack([d1[take], d0[take]])
    return Record(inputs, outputs, params)


def _build_record_task(args):
    master_seed, index, config = args
    try:
        return build_record(master_seed, index, config)
    except Exception as exc:  # re-raised with the index on the parent side
        raise GenerationError(index, exc) from exc


def build_dataset(n_records: int, master_seed: int,
                  gen_config: GenConfig = GenConfig(),
                  workers: int | None = None) -> Dataset:
    """Generate, then split deterministically from the master seed.

    Each record depends only on (master_seed, index), so the worker count
    never changes the result.
    """
    if n_records < 1:
        raise ValueError("n_records must be >= 1")
    tasks = [(master_seed, i, gen_config) for i in range(n_records)]
    if workers and workers > 1:
        with get_context("fork").Pool(workers) as pool:
            records = pool.map(_build_record_task, tasks, chunksize=8)
    else:
        records = [_build_record_task(t) for t in tasks]
    ds = Dataset(records, master_seed=master_seed)
    return split_dataset(ds, seed=master_seed)


def split_dataset(dataset: Dataset, fractions=(0.70, 0.15, 0.15),
                  seed: int = 0) -> Dataset:
    """Deterministic shuffled train/val/test partition.

    Counts are floor-based for val and test; the remainder goes to train.
    """
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions {fractions} do not sum to 1")
    n = len(dataset.records)
    n_val = int(np.floor(fractions[1] * n))
    n_test = int(np.floor(fractions[2] * n))
    n_train = n - n_val - n_test
    order = np.random.default_rng(seed).permutation(n)
    split = np.empty(n, dtype=np.uint8)
    split[order[:n_train]] = SPLIT_TRAIN
    split[order[n_train:n_train + n_val]] = SPLIT_VAL
    split[order[n_train + n_val:]] = SPLIT_TEST
    return Dataset(dataset.records, split, dataset.master_seed)


# -- persistence ---------------------------------------------------------------


def _pack_record(record: Record, label: int) -> bytes:
    p = record.params
    head = _PARAMS.pack(p.bit_time, p.edge_frac, p.v_cm, p.v_dm, p.clk_period,
                        p.clk_phase, p.clk_edge, p.r_load, p.c_load, p.rng_seed)
    return (head + struct.pack("<B", label)
            + record.inputs.tobytes() + record.outputs.tobytes())


def save_dataset(dataset: Dataset, path) -> None:
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, N_SAMPLES,
                              len(dataset.records), dataset.master_seed))
        for record, label in zip(dataset.records, dataset.split):
            fh.write(_pack_record(record, int(label)))


def _read_exact(fh, n: int, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise TruncatedFileError(f"file ends inside {what} ({len(buf)}/{n} bytes)")
    return buf


def load_dataset(path) -> Dataset:
    with open(path, "rb") as fh:
        magic, version, n_samples, n_records, master_seed = _HEADER.unpack(
            _read_exact(fh, _HEADER.size, "header"))
        if magic != MAGIC:
            raise BadMagicError(f"bad magic {magic!r}, expected {MAGIC!r}")
        if version != FORMAT_VERSION:
            raise VersionMismatchError(
                f"format version {version}, this reader handles {FORMAT_VERSION}")
        if n_samples != N_SAMPLES:
            raise DatasetIOError(f"unexpected sample count {n_samples}")
        records = []
        labels = np.empty(n_records, dtype=np.uint8)
        for i in range(n_records):
            block = _read_exact(fh, RECORD_BLOCK_BYTES, f"record {i}")
            vals = _PARAMS.unpack_from(block, 0)
            params = RecordParams(*vals[:9], rng_seed=int(vals[9]))
            labels[i] = block[_PARAMS.size]
            off = _PARAMS.size + 1
            flat = np.frombuffer(block, dtype="<f8", offset=off,
                                 count=5 * N_SAMPLES).copy()
            inputs = flat[:3 * N_SAMPLES].reshape(3, N_SAMPLES)
            outputs = flat[3 * N_SAMPLES:].reshape(2, N_SAMPLES)
            records.append(Record(inputs, outputs, params))
        if fh.read(1):
            raise DatasetIOError("trailing bytes after the last record")
    return Dataset(records, labels, int(master_seed))


# -- normalization ---------------------------------------------------------------


def _affine(x, rails, forward):
    lo = np.array([r[0] for r in rails]).reshape(-1, 1)
    hi = np.array([r[1] for r in rails]).reshape(-1, 1)
    x = np.asarray(x, dtype=np.float64)
    if forward:
        return (x - lo) / (hi - lo)
    return x * (hi - lo) + lo


def normalize_inputs(x: np.ndarray) -> np.ndarray:
    """Map raw volts to [0, 1] per channel using the construction rails."""
    return _affine(x, INPUT_RAILS, forward=True)


def denormalize_inputs(x: np.ndarray) -> np.ndarray:
    return _affine(x, INPUT_RAILS, forward=False)


def normalize_outputs(y: np.ndarray) -> np.ndarray:
    return _affine(y, OUTPUT_RAILS, forward=True)


def denormalize_outputs(y: np.ndarray) -> np.ndarray:
    return _affine(y, OUTPUT_RAILS, forward=False)


# -- CSV export ------------------------------------------------------------------


def export_record_csv(record: Record, path, predictions: np.ndarray | None = None) -> None:
    """One row per time step; optional predicted output columns appended."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = list(CSV_COLUMNS)
        if predictions is not None:
            header += ["PredDOut1", "PredDOut0"]
        writer.writerow(header)
        for j in range(N_SAMPLES):
            row = [repr(j * SAMPLE_DT)]
            row += [repr(float(v)) for v in record.inputs[:, j]]
            row += [repr(float(v)) for v in record.outputs[:, j]]
            if predictions is not None:
                row += [repr(float(v)) for v in predictions[:, j]]
            writer.writerow(row)


def parse_record_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a record CSV back into (inputs, outputs) arrays."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:6] != CSV_COLUMNS:
            raise DatasetIOError(f"unexpected CSV columns {header[:6]}")
        rows = [list(map(float, row[:6])) for row in reader]
    if len(rows) != N_SAMPLES:
        raise DatasetIOError(f"expected {N_SAMPLES} rows, found {len(rows)}")
    arr = np.array(rows)
    return arr[:, 1:4].T.copy(), arr[:, 4:6].T.copy()
