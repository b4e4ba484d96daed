"""
命令报告：每项检验的结论加总体结论，写出为 JSON（机器可读）和 .txt 摘要。
总体结论是各项结论的合取；声明了预期结论的检验按“结论是否符合预期”计入。
"""
import json
from dataclasses import dataclass, field
from typing import Optional, Union

from core.structures import FAIL, INCONCLUSIVE, PASS, StructureReport
from core.utils.logger import info
from core.utils.numpy_cconvert import convert_numpy_types, restore_float
from core.utils.path_util import with_suffix

REPORT_SCHEMA = "foldcalc-report/1"

# 各类非 StructureReport 结论到 pass/fail 的对应
_OUTCOME = {
    "EqualOnHomology": PASS,
    "Distinct": FAIL,
    "Inconclusive": INCONCLUSIVE,
}


@dataclass
class ReportEntry:
    name: str
    kind: str
    report: Union[StructureReport, dict]
    expect: Optional[str] = None

    @property
    def verdict(self) -> str:
        if isinstance(self.report, StructureReport):
            return self.report.verdict
        return self.report.get("verdict", INCONCLUSIVE)

    @property
    def status(self) -> str:
        if self.expect is not None:
            return PASS if self.verdict == self.expect else FAIL
        return _OUTCOME.get(self.verdict, self.verdict)

    def to_dict(self) -> dict:
        body = self.report.to_dict() if isinstance(self.report, StructureReport) else self.report
        return convert_numpy_types({"name": self.name, "kind": self.kind, "expect": self.expect,
                                    "status": self.status, "report": body})

    @classmethod
    def from_dict(cls, data: dict) -> 'ReportEntry':
        body = data["report"]
        if isinstance(body, dict) and "min_margin" in body:
            body = StructureReport.from_dict(body)
        return cls(data["name"], data["kind"], body, data.get("expect"))


@dataclass
class Report:
    command: str
    entries: list = field(default_factory=list)
    payload: dict = field(default_factory=dict)

    def add(self, name: str, kind: str, report, expect: Optional[str] = None) -> ReportEntry:
        if hasattr(report, "to_dict") and not isinstance(report, StructureReport):
            report = report.to_dict()
        entry = ReportEntry(name, kind, report, expect)
        self.entries.append(entry)
        return entry

    @property
    def verdict(self) -> str:
        statuses = [e.status for e in self.entries]
        if not statuses:
            return INCONCLUSIVE
        if any(s == FAIL for s in statuses):
            return FAIL
        if all(s == PASS for s in statuses):
            return PASS
        return INCONCLUSIVE

    @property
    def exit_code(self) -> int:
        return 0 if self.verdict == PASS else 1

    def to_dict(self) -> dict:
        return convert_numpy_types({
            "schema": REPORT_SCHEMA,
            "command": self.command,
            "verdict": self.verdict,
            "checks": [e.to_dict() for e in self.entries],
            "payload": self.payload,
        })

    @classmethod
    def from_dict(cls, data: dict) -> 'Report':
        return cls(data["command"], [ReportEntry.from_dict(e) for e in data.get("checks", [])],
                   data.get("payload", {}))

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, indent=2)

    def summary(self) -> str:
        lines = [f"命令: {self.command}", f"总体结论: {self.verdict}"]
        for e in self.entries:
            line = f"  [{e.status}] {e.kind} {e.name}: {e.verdict}"
            if e.expect is not None:
                line += f"（预期 {e.expect}）"
            if isinstance(e.report, StructureReport):
                r = e.report
                line += f"，最小裕度 {restore_float(r.min_margin):.6g}，样本 {r.samples}"
                if r.witness is not None and not r.passed:
                    line += f"，见证点 {r.witness.chart_id}{list(r.witness.values)}"
                for note in r.notes:
                    lines.append(line)
                    line = f"      - {note}"
            lines.append(line)
        return "\n".join(lines)

    def write(self, path: str):
        """
        写出 path（JSON）和 path.txt（摘要）
        """
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.dumps() + "\n")
        with open(with_suffix(path, ".txt"), "w", encoding="utf-8") as f:
            f.write(self.summary() + "\n")
        info(f"写出报告 {path}: {self.verdict}")


def load_report(path: str) -> Report:
    with open(path, "r", encoding="utf-8") as f:
        return Report.from_dict(json.load(f))
