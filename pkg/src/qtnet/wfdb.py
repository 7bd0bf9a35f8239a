"""WFDB header/signal parsing (formats 16 and 212), measurement tables and dosing timelines.

Only the single-segment subset of the WFDB format is handled. Unsupported
format codes are rejected instead of being misread.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import (IncompleteTimelineError, InvalidArgumentError, MissingLeadError, ParseError,
                     SchemaError, StructuralError, TruncationError, UnsupportedFormatError)
from .signal import EcgRecord, EcgSignal, IntervalLabels

SUPPORTED_FORMATS = (16, 212)
DEFAULT_GAIN = 200.0


@dataclass(frozen=True)
class SignalSpec:
    file_name: str
    format_code: int
    adc_gain: float = DEFAULT_GAIN
    adc_baseline: int = 0
    lead_name: str = ""
    units: str = "mV"
    adc_res: int = 0
    adc_zero: int = 0
    init_value: int = 0
    checksum: int = 0
    block_size: int = 0
    byte_offset: int = 0


@dataclass(frozen=True)
class RecordHeader:
    record_name: str
    n_signals: int
    sampling_rate: float
    n_samples: int
    signal_specs: Tuple[SignalSpec, ...] = ()
    comments: Tuple[str, ...] = ()

    def __post_init__(self):
        if self.n_signals != len(self.signal_specs):
            raise StructuralError(
                f"header declares {self.n_signals} signals but has {len(self.signal_specs)} spec lines")
        if not self.sampling_rate > 0:
            raise InvalidArgumentError("sampling_rate must be positive")
        for s in self.signal_specs:
            if s.format_code not in SUPPORTED_FORMATS:
                raise UnsupportedFormatError(s.format_code)
            if s.adc_gain == 0:
                raise InvalidArgumentError("adc_gain must be non-zero")

    def channel_of(self, lead: str) -> int:
        want = lead.strip().lower()
        for i, s in enumerate(self.signal_specs):
            if s.lead_name.strip().lower() == want:
                return i
        raise MissingLeadError(
            f"record {self.record_name!r} has no lead {lead!r} "
            f"(leads: {[s.lead_name for s in self.signal_specs]})")


# ----------------------------------------------------------------------------
# header text

def _int(token: str, line: int, what: str) -> int:
    try:
        return int(token)
    except ValueError:
        raise ParseError(f"expected integer {what}, got {token!r}", line=line) from None


def _float(token: str, line: int, what: str) -> float:
    try:
        return float(token)
    except ValueError:
        raise ParseError(f"expected number {what}, got {token!r}", line=line) from None


def _parse_record_line(tokens: List[str], line: int):
    if len(tokens) < 2:
        raise ParseError("record line needs at least a name and a signal count", line=line)
    name = tokens[0]
    if "/" in name:
        raise ParseError("multi-segment records are not supported", line=line)
    n_signals = _int(tokens[1], line, "signal count")
    rate = 250.0
    n_samples = 0
    if len(tokens) > 2:
        rate = _float(tokens[2].split("/")[0].split("(")[0], line, "sampling frequency")
    if len(tokens) > 3:
        n_samples = _int(tokens[3], line, "sample count")
    if n_signals < 0 or n_samples < 0 or not rate > 0:
        raise ParseError("record line values out of range", line=line)
    return name, n_signals, rate, n_samples


def _parse_signal_line(tokens: List[str], line: int) -> SignalSpec:
    if len(tokens) < 2:
        raise ParseError("signal line needs a file name and a format", line=line)
    file_name = tokens[0]
    fmt_token = tokens[1]
    offset = 0
    if "+" in fmt_token:
        fmt_token, off = fmt_token.split("+", 1)
        offset = _int(off, line, "byte offset")
    fmt_token = fmt_token.split(":")[0].split("x")[0]
    fmt = _int(fmt_token, line, "format code")
    if fmt not in SUPPORTED_FORMATS:
        raise UnsupportedFormatError(fmt, line=line)

    gain, baseline, units = DEFAULT_GAIN, None, "mV"
    if len(tokens) > 2:
        g = tokens[2]
        if "/" in g:
            g, units = g.split("/", 1)
        if "(" in g:
            g, b = g.split("(", 1)
            baseline = _int(b.rstrip(")"), line, "ADC baseline")
        gain = _float(g, line, "ADC gain")
        if gain == 0:
            gain = DEFAULT_GAIN
    ints = [0, 0, 0, 0, 0]  # adc_res, adc_zero, init_value, checksum, block_size
    for j in range(5):
        if len(tokens) > 3 + j:
            ints[j] = _int(tokens[3 + j], line, "signal field")
    description = " ".join(tokens[8:]) if len(tokens) > 8 else ""
    if baseline is None:
        baseline = ints[1]
    return SignalSpec(file_name, fmt, gain, baseline, description, units, *ints, byte_offset=offset)


def parse_header(text: str) -> RecordHeader:
    """Parse the text of a ``.hea`` file."""
    lines = []
    comments = []
    for number, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            comments.append(stripped[1:].strip())
            continue
        lines.append((number, stripped.split()))
    if not lines:
        raise ParseError("header has no record line", line=1)
    number, tokens = lines[0]
    name, n_signals, rate, n_samples = _parse_record_line(tokens, number)
    specs = tuple(_parse_signal_line(t, n) for n, t in lines[1:])
    if len(specs) != n_signals:
        raise StructuralError(
            f"header declares {n_signals} signals but has {len(specs)} spec lines",
            line=lines[-1][0])
    return RecordHeader(name, n_signals, rate, n_samples, specs, tuple(comments))


def _fmt_number(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def render_header(header: RecordHeader) -> str:
    out = [f"{header.record_name} {header.n_signals} {_fmt_number(header.sampling_rate)} "
           f"{header.n_samples}"]
    for s in header.signal_specs:
        fmt = f"{s.format_code}" + (f"+{s.byte_offset}" if s.byte_offset else "")
        gain = f"{_fmt_number(s.adc_gain)}({s.adc_baseline})/{s.units}"
        line = (f"{s.file_name} {fmt} {gain} {s.adc_res} {s.adc_zero} {s.init_value} "
                f"{s.checksum} {s.block_size}")
        if s.lead_name:
            line += f" {s.lead_name}"
        out.append(line)
    out.extend(f"# {c}" for c in header.comments)
    return "\n".join(out) + "\n"


# ----------------------------------------------------------------------------
# signal bytes

def _file_group(header: RecordHeader, channel: int) -> Tuple[List[int], int]:
    if not 0 <= channel < header.n_signals:
        raise InvalidArgumentError(f"channel {channel} out of range for {header.n_signals} signals")
    name = header.signal_specs[channel].file_name
    group = [i for i, s in enumerate(header.signal_specs) if s.file_name == name]
    fmts = {header.signal_specs[i].format_code for i in group}
    if len(fmts) != 1:
        raise UnsupportedFormatError(sorted(fmts)[0], message="mixed formats within one signal file")
    return group, group.index(channel)


def decode_format16(data: bytes) -> np.ndarray:
    return np.frombuffer(data[: len(data) - len(data) % 2], dtype="<i2").astype(np.int64)


def decode_format212(data: bytes, n_values: int) -> np.ndarray:
    """Unpack 12-bit two's-complement pairs stored in 3-byte groups."""
    raw = np.frombuffer(data, dtype=np.uint8).astype(np.int64)
    n_groups = (n_values + 1) // 2
    raw = np.concatenate([raw, np.zeros(max(0, 3 * n_groups - raw.size), dtype=np.int64)])
    b = raw[: 3 * n_groups].reshape(n_groups, 3)
    out = np.empty(2 * n_groups, dtype=np.int64)
    out[0::2] = b[:, 0] | ((b[:, 1] & 0x0F) << 8)
    out[1::2] = b[:, 2] | ((b[:, 1] & 0xF0) << 4)
    out[out >= 2048] -= 4096
    return out[:n_values]


def encode_format16(adc: np.ndarray) -> bytes:
    """Interleave ``(n_samples, n_channels)`` integer codes as little-endian int16."""
    adc = np.asarray(adc)
    if adc.ndim == 1:
        adc = adc[:, None]
    if adc.min(initial=0) < -32768 or adc.max(initial=0) > 32767:
        raise InvalidArgumentError("ADC codes out of int16 range")
    return np.ascontiguousarray(adc, dtype="<i2").tobytes()


def _expected_bytes(fmt: int, n_values: int) -> int:
    return 2 * n_values if fmt == 16 else math.ceil(3 * n_values / 2)


def read_adc(data: bytes, header: RecordHeader, channel: int) -> np.ndarray:
    """Raw integer codes of one channel."""
    group, pos = _file_group(header, channel)
    spec = header.signal_specs[channel]
    data = data[spec.byte_offset:]
    n_sig = len(group)
    if header.n_samples > 0:
        n_samples = header.n_samples
        expected = _expected_bytes(spec.format_code, n_samples * n_sig)
        if len(data) < expected:
            raise TruncationError(expected, len(data))
    else:
        per = 2 if spec.format_code == 16 else 1.5
        n_samples = int(len(data) // (per * n_sig))
    total = n_samples * n_sig
    if spec.format_code == 16:
        codes = decode_format16(data[: 2 * total])
    else:
        codes = decode_format212(data, total)
    return codes.reshape(n_samples, n_sig)[:, pos].copy()


def adc_to_physical(adc: np.ndarray, spec: SignalSpec) -> np.ndarray:
    values = (np.asarray(adc, dtype=np.float64) - spec.adc_baseline) / spec.adc_gain
    unit = spec.units.strip().lower()
    if unit in ("uv", "µv"):
        values = values / 1000.0
    elif unit == "v":
        values = values * 1000.0
    return values


def physical_to_adc(values_mv: np.ndarray, gain: float = DEFAULT_GAIN, baseline: int = 0) -> np.ndarray:
    return np.round(np.asarray(values_mv, dtype=np.float64) * gain + baseline).astype(np.int64)


def read_signal(data: bytes, header: RecordHeader, channel: int) -> EcgSignal:
    """Physical (mV) samples of ``channel`` from the bytes of its signal file."""
    spec = header.signal_specs[channel] if 0 <= channel < header.n_signals else None
    codes = read_adc(data, header, channel)
    if codes.size == 0:
        raise TruncationError(_expected_bytes(spec.format_code, 1), len(data))
    return EcgSignal(adc_to_physical(codes, spec), header.sampling_rate, spec.lead_name or f"ch{channel}")


def _checksum(codes: np.ndarray) -> int:
    """16-bit two's-complement sum, as stored in WFDB signal lines."""
    total = int(codes.sum()) % 65536
    return total - 65536 if total > 32767 else total


def write_signal(signals: Sequence[EcgSignal], record_name: str, gain: float = 1000.0,
                 baseline: int = 0) -> Tuple[RecordHeader, bytes]:
    """Encode equal-length signals as one format-16 file; returns (header, bytes)."""
    if not signals:
        raise InvalidArgumentError("need at least one signal")
    rate = signals[0].sampling_rate
    n = len(signals[0])
    if any(len(s) != n or s.sampling_rate != rate for s in signals):
        raise InvalidArgumentError("signals must share length and sampling rate")
    adc = np.stack([physical_to_adc(s.samples, gain, baseline) for s in signals], axis=1)
    data = encode_format16(adc)
    file_name = f"{record_name}.dat"
    specs = tuple(SignalSpec(file_name, 16, float(gain), baseline, s.lead_name, "mV", 16, baseline,
                             int(adc[0, i]), _checksum(adc[:, i]))
                  for i, s in enumerate(signals))
    return RecordHeader(record_name, len(signals), rate, n, specs), data


def write_record(directory, record_name: str, signals: Sequence[EcgSignal],
                 gain: float = 1000.0) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    header, data = write_signal(signals, record_name, gain)
    (directory / f"{record_name}.dat").write_bytes(data)
    path = directory / f"{record_name}.hea"
    path.write_text(render_header(header))
    return path


def read_record(hea_path, lead: Optional[str] = None, channel: int = 0) -> EcgSignal:
    """Load one channel (by lead name when given) of the record at ``hea_path``."""
    hea_path = Path(hea_path)
    header = parse_header(hea_path.read_text())
    if lead is not None:
        channel = header.channel_of(lead)
    elif not 0 <= channel < header.n_signals:
        raise InvalidArgumentError(f"channel {channel} out of range")
    data = (hea_path.parent / header.signal_specs[channel].file_name).read_bytes()
    return read_signal(data, header, channel)


# ----------------------------------------------------------------------------
# measurement tables

DEFAULT_COLUMNS = {
    "record_id": "EGREFID",
    "subject_id": "RANDID",
    "drug": "EXTRT",
    "time_offset_h": "TPT",
    "qt_ms": "QT",
    "hr_bpm": "HR",
    "rr_ms": "RR",
}
REQUIRED = ("record_id", "time_offset_h", "qt_ms")


@dataclass(frozen=True)
class Measurement:
    record_id: str
    time_offset_h: float
    qt_ms: float
    hr_bpm: float
    subject_id: str = ""
    drug: str = ""

    @property
    def labels(self) -> IntervalLabels:
        return IntervalLabels(qt_ms=self.qt_ms, hr_bpm=self.hr_bpm)


def load_column_mapping(path) -> Dict[str, str]:
    """Read a JSON {field: column} mapping, filling gaps from the defaults."""
    mapping = dict(DEFAULT_COLUMNS)
    mapping.update(json.loads(Path(path).read_text()))
    return mapping


def read_measurement_table(csv_text: str, columns: Optional[Mapping[str, str]] = None,
                           skip_incomplete: bool = False) -> List[Measurement]:
    """One :class:`Measurement` per row; HR comes from the HR column or ``60000 / RR``.

    ``columns`` maps field names (see ``DEFAULT_COLUMNS``) to CSV header
    names. Rows with blank required cells raise unless ``skip_incomplete``.
    """
    mapping = dict(DEFAULT_COLUMNS)
    if columns:
        mapping.update(columns)
    reader = csv.reader(io.StringIO(csv_text))
    try:
        head = [h.strip() for h in next(reader)]
    except StopIteration:
        raise SchemaError(mapping["record_id"], "measurement table is empty") from None
    index = {h: i for i, h in enumerate(head)}
    for key in REQUIRED:
        if mapping[key] not in index:
            raise SchemaError(mapping[key])
    hr_col = mapping.get("hr_bpm") if mapping.get("hr_bpm") in index else None
    rr_col = mapping.get("rr_ms") if mapping.get("rr_ms") in index else None
    if hr_col is None and rr_col is None:
        raise SchemaError(mapping.get("hr_bpm") or mapping.get("rr_ms"),
                          "table has neither a heart-rate nor an RR column")

    rows = []
    for line_no, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue

        def cell(col):
            i = index[col]
            return row[i].strip() if i < len(row) else ""

        def number(col):
            text = cell(col)
            try:
                return float(text)
            except ValueError:
                raise ParseError(f"non-numeric value {text!r} in column {col!r}",
                                 line=line_no, column=index[col] + 1) from None

        try:
            qt = number(mapping["qt_ms"])
            t = number(mapping["time_offset_h"])
            if hr_col is not None and cell(hr_col):
                hr = number(hr_col)
            elif rr_col is not None:
                rr = number(rr_col)
                if not rr > 0:
                    raise ParseError(f"RR must be positive, got {rr}", line=line_no,
                                     column=index[rr_col] + 1)
                hr = 60000.0 / rr
            else:
                hr = number(hr_col)
        except ParseError:
            if skip_incomplete:
                continue
            raise
        rows.append(Measurement(
            record_id=cell(mapping["record_id"]), time_offset_h=t, qt_ms=qt, hr_bpm=hr,
            subject_id=cell(mapping["subject_id"]) if mapping.get("subject_id") in index else "",
            drug=cell(mapping["drug"]) if mapping.get("drug") in index else "",
        ))
    return rows


# ----------------------------------------------------------------------------
# dosing timelines

@dataclass(frozen=True)
class TimelineEntry:
    time_offset_h: float
    record: EcgRecord
    adjudicated_labels: Optional[IntervalLabels] = None


@dataclass
class DosingTimeline:
    """Pre/post-dose records of one subject; replicates share an offset."""

    subject_id: str
    drug_name: str
    entries: List[TimelineEntry] = field(default_factory=list)

    def __post_init__(self):
        self.entries = sorted(self.entries, key=lambda e: e.time_offset_h)
        if not any(e.time_offset_h < 0 for e in self.entries):
            raise IncompleteTimelineError(
                f"subject {self.subject_id!r} ({self.drug_name}) has no pre-dose record")

    @property
    def offsets(self) -> List[float]:
        """Distinct time offsets in increasing order."""
        return sorted({e.time_offset_h for e in self.entries})

    def at(self, offset: float) -> List[TimelineEntry]:
        return [e for e in self.entries if e.time_offset_h == offset]


def index_headers(directory) -> Dict[str, Path]:
    """Map record name -> .hea path for every header below ``directory``."""
    found = {}
    for p in sorted(Path(directory).rglob("*.hea")):
        found.setdefault(p.stem, p)
    return found


def _find_table(directory: Path, table: Optional[str]) -> Path:
    if table is not None:
        path = Path(table)
        return path if path.is_absolute() else directory / path
    csvs = sorted(p for p in directory.glob("*.csv") if p.name != "labels.csv")
    if len(csvs) != 1:
        raise InvalidArgumentError(
            f"expected one measurement table in {directory}, found {[p.name for p in csvs]}")
    return csvs[0]


def load_dosing_timeline(directory, subject_id: str, drug_name: str, lead: str = "I",
                         table: Optional[str] = None,
                         columns: Optional[Mapping[str, str]] = None) -> DosingTimeline:
    """Assemble a subject's timeline from WFDB records plus the measurement table."""
    directory = Path(directory)
    rows = read_measurement_table(_find_table(directory, table).read_text(), columns,
                                  skip_incomplete=True)
    rows = [r for r in rows
            if (not r.subject_id or r.subject_id == str(subject_id))
            and (not r.drug or r.drug.lower() == drug_name.lower())]
    headers = index_headers(directory)
    entries = []
    for row in rows:
        path = headers.get(row.record_id)
        if path is None:
            continue
        sig = read_record(path, lead=lead)
        record = EcgRecord(sig, row.labels, row.record_id, str(subject_id))
        entries.append(TimelineEntry(row.time_offset_h, record, row.labels))
    if not entries:
        raise IncompleteTimelineError(f"no records found for subject {subject_id!r} ({drug_name})")
    return DosingTimeline(str(subject_id), drug_name, entries)


def build_manifest(directory, table: Optional[str] = None,
                   columns: Optional[Mapping[str, str]] = None) -> dict:
    """JSON-ready {subject_id: {drug: [{record_id, path, time_offset_h, qt_ms, hr_bpm}]}}."""
    directory = Path(directory)
    rows = read_measurement_table(_find_table(directory, table).read_text(), columns,
                                  skip_incomplete=True)
    headers = index_headers(directory)
    manifest: Dict[str, Dict[str, list]] = {}
    for row in rows:
        path = headers.get(row.record_id)
        if path is None:
            continue
        drug = row.drug or "unknown"
        manifest.setdefault(row.subject_id or "unknown", {}).setdefault(drug, []).append({
            "record_id": row.record_id,
            "path": str(path.relative_to(directory)),
            "time_offset_h": row.time_offset_h,
            "qt_ms": row.qt_ms,
            "hr_bpm": row.hr_bpm,
        })
    for drugs in manifest.values():
        for entries in drugs.values():
            entries.sort(key=lambda e: (e["time_offset_h"], e["record_id"]))
    return {"root": str(directory.resolve()), "subjects": manifest}


def timelines_from_manifest(manifest: dict, lead: str = "I",
                            drug: Optional[str] = None) -> List[DosingTimeline]:
    root = Path(manifest["root"])
    timelines = []
    for subject, drugs in sorted(manifest["subjects"].items()):
        for drug_name, items in sorted(drugs.items()):
            if drug is not None and drug_name.lower() != drug.lower():
                continue
            entries = []
            for item in items:
                sig = read_record(root / item["path"], lead=lead)
                labels = None
                if item.get("qt_ms") is not None and item.get("hr_bpm") is not None:
                    labels = IntervalLabels(qt_ms=item["qt_ms"], hr_bpm=item["hr_bpm"])
                rec = EcgRecord(sig, labels, item["record_id"], subject)
                entries.append(TimelineEntry(float(item["time_offset_h"]), rec, labels))
            timelines.append(DosingTimeline(subject, drug_name, entries))
    return timelines


# ----------------------------------------------------------------------------
# labelled corpora on disk

LABEL_FIELDS = ("record_id", "subject_id", "qt_ms", "hr_bpm")


def write_corpus(directory, records: Iterable[EcgRecord], gain: float = 1000.0) -> int:
    """Write records as format-16 WFDB files plus ``labels.csv``; returns the count."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    n = 0
    with open(directory / "labels.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(LABEL_FIELDS)
        for rec in records:
            write_record(directory, rec.record_id, [rec.signal], gain)
            lab = rec.labels
            writer.writerow([rec.record_id, rec.subject_id,
                             repr(lab.qt_ms) if lab else "", repr(lab.hr_bpm) if lab else ""])
            n += 1
    return n


def read_corpus(directory, lead: Optional[str] = None) -> List[EcgRecord]:
    """Load a directory written by :func:`write_corpus` (labels optional)."""
    directory = Path(directory)
    if not directory.is_dir():
        raise InvalidArgumentError(f"corpus directory {str(directory)!r} does not exist")
    headers = index_headers(directory)
    labels_path = directory / "labels.csv"
    records = []
    if labels_path.exists():
        with open(labels_path, newline="") as fh:
            for line_no, row in enumerate(csv.DictReader(fh), start=2):
                for col in LABEL_FIELDS[:2]:
                    if col not in row:
                        raise SchemaError(col)
                path = headers.get(row["record_id"])
                if path is None:
                    raise InvalidArgumentError(f"labels.csv line {line_no}: no header for "
                                               f"{row['record_id']!r}")
                labels = None
                if row.get("qt_ms") and row.get("hr_bpm"):
                    labels = IntervalLabels(qt_ms=float(row["qt_ms"]), hr_bpm=float(row["hr_bpm"]))
                sig = read_record(path, lead=lead)
                records.append(EcgRecord(sig, labels, row["record_id"],
                                         row["subject_id"] or row["record_id"]))
    else:
        for name, path in headers.items():
            records.append(EcgRecord(read_record(path, lead=lead), None, name, name))
    return records
