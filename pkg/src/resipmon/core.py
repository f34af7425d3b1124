"""Shared domain types: apex domains, calendar intervals, addresses, CIDRs.

Everything here is an immutable value, safe to share across threads. Dates
are UTC calendar days throughout; sub-day precision is truncated on ingest.
"""

from __future__ import annotations

import datetime as dt
import ipaddress
import re
from dataclasses import dataclass
from importlib import resources
from typing import Iterable, Union

IpAddr = Union[ipaddress.IPv4Address, ipaddress.IPv6Address]
Cidr = Union[ipaddress.IPv4Network, ipaddress.IPv6Network]
DateDay = dt.date
ServiceId = str


class DomainError(ValueError):
    """A hostname that cannot be reduced to a registrable domain."""


_LABEL_RE = re.compile(r"^(?!-)[a-z0-9_-]{1,63}(?<!-)$")


class PublicSuffixList:
    """Suffix rules loaded from a snapshot in the community list format.

    One rule per line; ``//`` starts a comment; ``*`` matches exactly one
    label; ``!`` marks an exception rule. The bundled snapshot is versioned
    and the runtime never fetches a fresh copy.
    """

    def __init__(self, rules: Iterable[str]):
        self.exact: set[str] = set()
        self.wildcard: set[str] = set()   # stored without the leading "*."
        self.exception: set[str] = set()  # stored without the leading "!"
        for line in rules:
            line = line.strip().lower()
            if not line or line.startswith("//") or line.startswith("#"):
                continue
            if line.startswith("!"):
                self.exception.add(line[1:])
            elif line.startswith("*."):
                self.wildcard.add(line[2:])
            else:
                self.exact.add(line)

    @classmethod
    def from_file(cls, path) -> "PublicSuffixList":
        with open(path, encoding="utf-8") as fh:
            return cls(fh)

    def suffix_len(self, labels: list[str]) -> int:
        """Number of trailing labels forming the public suffix."""
        best = 1  # implicit "*" default rule: the TLD itself
        for i in range(len(labels)):
            candidate = ".".join(labels[i:])
            n = len(labels) - i
            if candidate in self.exception:
                # exception rule: the suffix is the rule minus its first label
                return n - 1
            if candidate in self.exact and n > best:
                best = n
            if n >= 2 and ".".join(labels[i + 1:]) in self.wildcard and n > best:
                best = n
        return best


def _bundled_psl() -> PublicSuffixList:
    global _PSL
    if _PSL is None:
        text = resources.files("resipmon.data").joinpath(
            "public_suffix_snapshot.dat").read_text(encoding="utf-8")
        _PSL = PublicSuffixList(text.splitlines())
    return _PSL


_PSL: PublicSuffixList | None = None


@dataclass(frozen=True, order=True)
class ApexDomain:
    """A lowercase registrable domain (one label below a public suffix)."""

    name: str

    def __str__(self) -> str:
        return self.name


def to_apex(host: str, psl: PublicSuffixList | None = None) -> ApexDomain:
    """Reduce a hostname to its registrable (apex) domain.

    Raises DomainError for malformed hostnames and for inputs that are
    themselves a public suffix. Idempotent: the apex of an apex is itself.
    """
    if not isinstance(host, str):
        raise DomainError(f"not a hostname: {host!r}")
    name = host.strip().lower().rstrip(".")
    if not name or "/" in name or ":" in name or "@" in name or " " in name:
        raise DomainError(f"malformed hostname: {host!r}")
    labels = name.split(".")
    if any(not _LABEL_RE.match(label) for label in labels):
        raise DomainError(f"malformed hostname: {host!r}")
    if len(labels) >= 4 and all(label.isdigit() for label in labels):
        raise DomainError(f"not a hostname: {host!r}")
    psl = psl or _bundled_psl()
    n = psl.suffix_len(labels)
    if len(labels) <= n:
        raise DomainError(f"public suffix only, no registrable domain: {host!r}")
    return ApexDomain(".".join(labels[-(n + 1):]))


@dataclass(frozen=True, order=True)
class Interval:
    """Closed day range [first, last], both ends inclusive."""

    first: DateDay
    last: DateDay

    def __post_init__(self):
        if self.first > self.last:
            raise ValueError(f"interval ends before it starts: {self}")

    @property
    def day_count(self) -> int:
        return (self.last - self.first).days + 1

    def covers(self, day: DateDay) -> bool:
        return self.first <= day <= self.last


def merge_intervals(intervals: Iterable[Interval]) -> list[Interval]:
    """Merge into disjoint sorted intervals, coalescing adjacent ones.

    Adjacent means a gap of zero uncovered days, so [Jan1,Jan2] + [Jan3,Jan4]
    merges to [Jan1,Jan4]. The union of covered days is preserved exactly.
    """
    ordered = sorted(intervals)
    merged: list[Interval] = []
    for iv in ordered:
        if merged and iv.first <= merged[-1].last + dt.timedelta(days=1):
            if iv.last > merged[-1].last:
                merged[-1] = Interval(merged[-1].first, iv.last)
        else:
            merged.append(iv)
    return merged


def covered_days(intervals: Iterable[Interval]) -> int:
    """Distinct days covered by the union of the intervals."""
    return sum(iv.day_count for iv in merge_intervals(intervals))


def parse_ip(value: str) -> IpAddr:
    """Parse an IPv4/IPv6 address into its canonical form."""
    return ipaddress.ip_address(value.strip())


def parse_cidr(value: str) -> Cidr:
    """Parse a CIDR; host bits must be zero."""
    return ipaddress.ip_network(value.strip(), strict=True)


def parse_timestamp(value: str) -> dt.datetime:
    """ISO-8601 datetime, including the Z suffix Python 3.10 rejects."""
    value = value.strip()
    if value.endswith(("Z", "z")):
        value = value[:-1] + "+00:00"
    return dt.datetime.fromisoformat(value)


def parse_day(value: str) -> DateDay:
    """Parse an ISO date (or datetime, truncated) into a UTC calendar day."""
    value = value.strip()
    if "T" in value or " " in value:
        return parse_timestamp(value).date()
    return dt.date.fromisoformat(value)


def day_span(first: DateDay, last: DateDay) -> int:
    """Whole-day span from first to last observation, both inclusive."""
    return (last - first).days + 1
