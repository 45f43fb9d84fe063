"""Per-file speaker segment lists."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True, order=True)
class Segment:
    speaker: str
    start: float
    duration: float

    @property
    def end(self) -> float:
        return self.start + self.duration


@dataclass
class Timeline:
    file_id: str
    segments: list[Segment] = field(default_factory=list)

    def __post_init__(self) -> None:
        for s in self.segments:
            _check(s)

    def add(self, speaker: str, start: float, duration: float) -> None:
        seg = Segment(speaker, float(start), float(duration))
        _check(seg)
        self.segments.append(seg)

    @property
    def speakers(self) -> list[str]:
        return sorted({s.speaker for s in self.segments})

    def by_speaker(self) -> dict[str, list[tuple[float, float]]]:
        """Sorted, merged (start, end) intervals per speaker."""
        raw: dict[str, list[tuple[float, float]]] = {}
        for s in self.segments:
            raw.setdefault(s.speaker, []).append((s.start, s.end))
        out = {}
        for spk in sorted(raw):
            merged: list[list[float]] = []
            for a, b in sorted(raw[spk]):
                if merged and a <= merged[-1][1]:
                    merged[-1][1] = max(merged[-1][1], b)
                else:
                    merged.append([a, b])
            out[spk] = [(a, b) for a, b in merged]
        return out

    def canonical(self) -> "Timeline":
        segs = [
            Segment(spk, a, b - a)
            for spk, ivs in self.by_speaker().items()
            for a, b in ivs
        ]
        segs.sort(key=lambda s: (s.start, s.speaker))
        return Timeline(self.file_id, segs)

    def total_speech(self) -> float:
        return sum(b - a for ivs in self.by_speaker().values() for a, b in ivs)


def _check(s: Segment) -> None:
    if not s.start >= 0.0:
        raise ValueError(f"segment start must be >= 0, got {s.start}")
    if not s.duration > 0.0:
        raise ValueError(f"segment duration must be > 0, got {s.duration}")
