"""Exception hierarchy. Every error carries the name of the module that raised it."""


class LvGridError(Exception):
    module = "lvgrid"

    def __str__(self) -> str:
        return f"[{self.module}] {super().__str__()}"


class ConfigError(LvGridError, ValueError):
    module = "config"


class NetworkParseError(LvGridError, ValueError):
    module = "grid-model"

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class TopologyError(LvGridError, ValueError):
    module = "grid-model"

    def __init__(self, message: str, edges=()):
        self.edges = list(edges)
        if self.edges:
            message = f"{message}: " + ", ".join(f"{a}-{b}" for a, b in self.edges)
        super().__init__(message)


class NetworkValidationError(LvGridError, ValueError):
    module = "grid-model"


class DemandError(LvGridError, ValueError):
    module = "demand-alloc"


class ReconciliationError(DemandError):
    def __init__(self, message: str, step: int | None = None):
        self.step = step
        super().__init__(message)


class PvConfigError(LvGridError, ValueError):
    module = "pv-gen"


class TariffError(LvGridError, ValueError):
    module = "tariff-engine"


class CalibrationError(TariffError):
    def __init__(self, message: str, best_ratio: float, best_multiplier: float, evaluations: int):
        self.best_ratio = best_ratio
        self.best_multiplier = best_multiplier
        self.evaluations = evaluations
        super().__init__(
            f"{message} (best ratio {best_ratio:.4f} at multiplier {best_multiplier:.4g}, "
            f"{evaluations} evaluations)"
        )


class OptimizationError(LvGridError, RuntimeError):
    module = "prosumer-opt"

    def __init__(self, message: str, log: str = ""):
        self.log = log
        super().__init__(message)


class SharingError(LvGridError, ValueError):
    module = "prosumer-opt"


class PowerFlowError(LvGridError, RuntimeError):
    module = "power-flow"

    def __init__(self, message: str, residual: float = float("nan")):
        self.residual = residual
        super().__init__(message)


class KpiError(LvGridError, ValueError):
    module = "kpi"
