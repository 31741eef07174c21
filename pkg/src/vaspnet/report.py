"""Run reports: line-oriented text and a byte-stable canonical form.

The canonical form is a stream of length-prefixed canonical records (header,
one per event, trailer with metrics and the final log digest). Replaying a
canonical report re-derives the digest from the event records and checks it
against the embedded one.
"""

from __future__ import annotations

import struct

from . import crypto
from .crypto import (
    canonical_decode,
    canonical_encode,
    dec_str,
    dec_u64,
    decode_str_map,
    digest,
    enc_str,
    enc_u64,
    encode_str_map,
)
from .harness import EventRecord, RunResult

FORMAT_LABEL = "vaspnet-report"
FORMAT_VERSION = 1


class ReplayMismatch(Exception):
    pass


def render_text(result: RunResult) -> str:
    sim = result.sim
    lines = [
        "vaspnet run report",
        f"seed={sim.seed} final_tick={sim.metrics.final_tick} events={len(sim.log_)}",
        f"log_digest={result.digest_hex}",
        "",
        "[metrics]",
    ]
    lines += [f"{key}={value}" for key, value in sim.metrics.as_pairs()]
    lines.append("")
    lines.append("[transfers]")
    for record in sim.log_.entries:
        if record.event == "record_confirmed" and dict(record.details).get("role") == "originator":
            lines.append(f"transfer_confirmed {dict(record.details).get('record', '')}")
        elif record.event == "transfer_denied":
            details = dict(record.details)
            lines.append(
                f"transfer_denied reason={details.get('reason', '')} "
                f"detail={details.get('detail', '')}".rstrip()
            )
    lines.append("")
    lines.append("[audit]")
    for vasp_id, report in sim.audit_reports().items():
        for line in report.report_lines():
            lines.append(f"{vasp_id} {line}")
    lines.append("")
    lines.append("[reconciliation]")
    for vasp_id, report in sim.reconcile_reports().items():
        for line in report.report_lines():
            lines.append(f"{vasp_id} {line}")
    if sim.breaches:
        lines.append("")
        lines.append("[invariant breaches]")
        lines += sim.breaches
    lines.append("")
    return "\n".join(lines)


def _frame(record_bytes: bytes) -> bytes:
    return struct.pack(">I", len(record_bytes)) + record_bytes


def _unframe(data: bytes) -> list[bytes]:
    records = []
    pos = 0
    while pos < len(data):
        if pos + 4 > len(data):
            raise ReplayMismatch("truncated frame header")
        (length,) = struct.unpack_from(">I", data, pos)
        pos += 4
        if pos + length > len(data):
            raise ReplayMismatch("truncated frame body")
        records.append(data[pos:pos + length])
        pos += length
    return records


def render_canonical(result: RunResult) -> bytes:
    sim = result.sim
    header = canonical_encode([
        (1, enc_str(FORMAT_LABEL)),
        (2, enc_u64(FORMAT_VERSION)),
        (3, enc_u64(sim.seed)),
    ])
    out = bytearray(_frame(header))
    for record in sim.log_.entries:
        out += _frame(record.to_bytes())
    trailer = canonical_encode([
        (1, enc_str("trailer")),
        (2, sim.log_.running_digest),
        (3, encode_str_map(dict(sim.metrics.as_pairs()))),
    ])
    out += _frame(trailer)
    return bytes(out)


def replay_canonical(data: bytes) -> tuple[str, dict[str, str]]:
    """Recompute the digest from a canonical report; returns (digest_hex, metrics).

    Raises ReplayMismatch when the recomputed digest differs from the embedded
    one or the stream is malformed.
    """
    frames = _unframe(data)
    if len(frames) < 2:
        raise ReplayMismatch("report must contain a header and a trailer")
    header = dict(canonical_decode(frames[0]))
    if dec_str(header[1]) != FORMAT_LABEL:
        raise ReplayMismatch("not a vaspnet canonical report")
    if dec_u64(header[2]) != FORMAT_VERSION:
        raise ReplayMismatch("unsupported report version")
    trailer = dict(canonical_decode(frames[-1]))
    if dec_str(trailer[1]) != "trailer":
        raise ReplayMismatch("missing trailer record")
    embedded = trailer[2]
    running = bytes(crypto.HASH_LEN)
    for frame in frames[1:-1]:
        running = digest(running + frame)
    if running != embedded:
        raise ReplayMismatch(
            f"digest mismatch: recomputed {running.hex()}, embedded {embedded.hex()}"
        )
    return running.hex(), decode_str_map(trailer[3])


def decode_events(data: bytes) -> list[EventRecord]:
    frames = _unframe(data)
    events = []
    for frame in frames[1:-1]:
        fields = dict(canonical_decode(frame))
        events.append(EventRecord(
            tick=dec_u64(fields[1]),
            actor=dec_str(fields[2]),
            event=dec_str(fields[3]),
            details=tuple(sorted(decode_str_map(fields[4]).items())),
        ))
    return events


def emit_report(result: RunResult, format: str = "text") -> bytes:
    """Render a run report; the canonical form is byte-stable."""
    if format == "text":
        return render_text(result).encode()
    if format == "canonical":
        return render_canonical(result)
    raise ValueError(f"unknown report format {format!r}")


def dump_route_lines(result: RunResult) -> list[str]:
    lines = []
    sim = result.sim
    for network_id in sorted(sim.networks):
        for line in sim.networks[network_id].dump_route_lines():
            lines.append(f"{network_id},{line}")
    return lines


def dump_ledger_lines(result: RunResult) -> list[str]:
    return result.sim.chain.export_lines()
