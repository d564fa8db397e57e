"""Hardware provenance: probe the host, merge manual fields, validate the CPU name."""

from __future__ import annotations

import datetime as _dt
import os
import platform
import re
from dataclasses import asdict, dataclass, fields

FAMILY_ONLY_ERROR = (
    "cpu_model_exact {value!r} names a CPU family, not a model; the exact model must be reported "
    "(e.g. 'Intel Xeon W-2195' or 'Intel Core i5-4670'). Parts that share a family name such as "
    "'Intel Core i5' differ in speed by more than an order of magnitude. Supply it with "
    "--set cpu_model_exact=..."
)

# normalised strings that only identify a brand or product line
_FAMILY_ONLY = [re.compile(p) for p in (
    r"",
    r"(generic|unknown|virtual|qemu virtual.*|common kvm)",
    r"(intel|amd|arm|apple|qualcomm|ibm|risc-?v)",
    r"intel (core|core i[3579]|core ultra( [3579])?|xeon|xeon (e3|e5|e7|w|d|gold|silver|bronze|platinum)"
    r"|pentium|celeron|atom)",
    r"amd (ryzen|ryzen [3579]|ryzen threadripper|threadripper|epyc|athlon|opteron|phenom|fx)",
    r"apple (silicon|m series)",
)]


class HardwareError(ValueError):
    pass


@dataclass(frozen=True)
class HardwareDescriptor:
    cpu_model_exact: str
    core_count: int
    base_frequency: str
    ram_bytes: int
    os_name_version: str
    captured_at: str

    def to_dict(self) -> dict:
        return asdict(self)

    def provenance(self) -> dict:
        """Fields that identify the machine (the capture time is left out)."""
        d = self.to_dict()
        d.pop("captured_at")
        return d


def _normalise(cpu: str) -> str:
    s = re.sub(r"\((r|tm|c)\)", " ", cpu.lower())
    s = re.sub(r"@\s*[\d.]+\s*[gm]hz", " ", s)
    s = re.sub(r"\b[\d.]+\s*[gm]hz\b", " ", s)
    s = re.sub(r"\b(cpu|processor|\d+-core|with radeon graphics)\b", " ", s)
    return re.sub(r"\s+", " ", s).strip()


def is_family_only(cpu: str) -> bool:
    norm = _normalise(cpu)
    if any(p.fullmatch(norm) for p in _FAMILY_ONLY):
        return True
    return not re.search(r"\d", norm)


def validate(h: HardwareDescriptor) -> HardwareDescriptor:
    if not h.cpu_model_exact or is_family_only(h.cpu_model_exact):
        raise HardwareError(FAMILY_ONLY_ERROR.format(value=h.cpu_model_exact))
    if h.core_count < 1:
        raise HardwareError("core_count must be >= 1")
    if h.ram_bytes < 0:
        raise HardwareError("ram_bytes must be >= 0")
    return h


def _cpuinfo() -> dict[str, str]:
    info: dict[str, str] = {}
    try:
        with open("/proc/cpuinfo", encoding="utf-8") as fh:
            for line in fh:
                if ":" in line:
                    k, v = line.split(":", 1)
                    info.setdefault(k.strip(), v.strip())
    except OSError:
        pass
    return info


def _ram_bytes() -> int:
    try:
        with open("/proc/meminfo", encoding="utf-8") as fh:
            for line in fh:
                if line.startswith("MemTotal:"):
                    return int(line.split()[1]) * 1024
    except OSError:
        pass
    try:
        return int(os.sysconf("SC_PAGE_SIZE") * os.sysconf("SC_PHYS_PAGES"))
    except (ValueError, OSError, AttributeError):
        return 0


def _base_frequency(cpu: str) -> str:
    # the current "cpu MHz" moves with frequency scaling, so it is not used
    m = re.search(r"@\s*([\d.]+)\s*GHz", cpu, re.IGNORECASE)
    if m:
        return f"{float(m.group(1)):.2f} GHz"
    for name in ("base_frequency", "cpuinfo_max_freq"):
        try:
            with open(f"/sys/devices/system/cpu/cpu0/cpufreq/{name}", encoding="utf-8") as fh:
                khz = int(fh.read().strip())
            return f"{khz / 1e6:.2f} GHz"
        except (OSError, ValueError):
            continue
    return "unknown"


def probe() -> dict:
    """Best-effort description of the current host, without validation."""
    info = _cpuinfo()
    cpu = info.get("model name") or platform.processor() or platform.machine() or "unknown"
    freq = _base_frequency(cpu)
    return {
        "cpu_model_exact": cpu,
        "core_count": len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1),
        "base_frequency": freq,
        "ram_bytes": _ram_bytes(),
        "os_name_version": platform.platform(),
        "captured_at": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }


_INT_FIELDS = {"core_count", "ram_bytes"}


def capture_hardware(overrides: dict | None = None, check: bool = True) -> HardwareDescriptor:
    """Probe the host and apply manual ``overrides``; rejects family-only CPU names."""
    values = probe()
    names = {f.name for f in fields(HardwareDescriptor)}
    for k, v in (overrides or {}).items():
        if k not in names:
            raise HardwareError(f"unknown hardware field {k!r}; expected one of {sorted(names)}")
        values[k] = int(v) if k in _INT_FIELDS else str(v)
    h = HardwareDescriptor(**values)
    return validate(h) if check else h


def parse_assignments(items: list[str] | None) -> dict[str, str]:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise HardwareError(f"expected field=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out
