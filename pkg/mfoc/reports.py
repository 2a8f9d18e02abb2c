from typing import Dict, List


class CheckResult:
    """ One pass/fail item of a validation or certification report, with measured values """

    def __init__(self, name: str, passed: bool, measured: Dict[str, float], message: str = "",
                 informational: bool = False):
        self.name = name
        self.passed = passed
        self.measured = measured
        self.message = message
        self.informational = informational

    def __repr__(self):
        status = "info" if self.informational else ("pass" if self.passed else "FAIL")
        return f"{self.name}: {status} {self.message}"

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "measured": self.measured, "message": self.message,
                "informational": self.informational}


class Report:
    """ Ordered CheckResults - informational items never fail the report """

    def __init__(self, checks: List[CheckResult], warnings: List[str] = None):
        self.checks = checks
        self.warnings = warnings or []

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks if not c.informational)

    def __getitem__(self, name: str) -> CheckResult:
        for check in self.checks:
            if check.name == name:
                return check
        raise KeyError(name)

    def __contains__(self, name: str) -> bool:
        return any(c.name == name for c in self.checks)

    def failures(self) -> List[CheckResult]:
        return [c for c in self.checks if not (c.passed or c.informational)]

    def to_dict(self) -> dict:
        return {"passed": self.passed, "checks": [c.to_dict() for c in self.checks], "warnings": self.warnings}
