"""Commit category schema: 16 numbered categories plus Uncategorized."""

from __future__ import annotations

import enum

from isamig.oracle import DefectClass


class Category(enum.IntEnum):
    Uncategorized = 0
    PlatformSpecificConditionals = 1
    DataRepresentation = 2
    IntrinsicsAndVectorCode = 3
    MemoryModel = 4
    PerformanceOptimization = 5
    TestFixes = 6
    TestExecutionEnvironment = 7
    BuildAndConfigFiles = 8
    ReleaseAndRolloutConfig = 9
    SchedulingAndProvisioning = 10
    BuildTestInfrastructure = 11
    MigrationTooling = 12
    MonitoringAndDashboards = 13
    CodeCleanupDeprecation = 14
    HardwarePlatformEnablement = 15
    Documentation = 16

    @property
    def label(self) -> str:
        return self.name

    @property
    def group(self) -> str:
        for name, members in GROUPS.items():
            if self in members:
                return name
        return "Uncategorized"

    @classmethod
    def parse(cls, value) -> "Category":
        """Accept a number, a numeric string or a name; raises ValueError otherwise."""
        if isinstance(value, bool):
            raise ValueError(f"not a category: {value!r}")
        if isinstance(value, int):
            return cls(value)
        if isinstance(value, str):
            s = value.strip()
            if s.isdigit():
                return cls(int(s))
            if s in cls.__members__:
                return cls[s]
        raise ValueError(f"not a category: {value!r}")


C = Category
GROUPS: dict[str, tuple[Category, ...]] = {
    "CodeChanges": (C.PlatformSpecificConditionals, C.DataRepresentation, C.IntrinsicsAndVectorCode,
                    C.MemoryModel, C.PerformanceOptimization),
    "TestChanges": (C.TestFixes, C.TestExecutionEnvironment),
    "BuildAndConfig": (C.BuildAndConfigFiles, C.ReleaseAndRolloutConfig, C.SchedulingAndProvisioning),
    "SupportingProcesses": (C.BuildTestInfrastructure, C.MigrationTooling, C.MonitoringAndDashboards,
                            C.CodeCleanupDeprecation, C.HardwarePlatformEnablement, C.Documentation),
}

# category credited when a given defect class is repaired
CATEGORY_OF_DEFECT: dict[DefectClass, Category] = {
    DefectClass.IntrinsicUse: C.IntrinsicsAndVectorCode,
    DefectClass.LongDouble: C.DataRepresentation,
    DefectClass.ExactFpEquality: C.TestFixes,
    DefectClass.ArchSpecificFlag: C.BuildAndConfigFiles,
    DefectClass.MemoryOrdering: C.MemoryModel,
    DefectClass.HeapLimit: C.SchedulingAndProvisioning,
    DefectClass.UnsupportedDependency: C.BuildAndConfigFiles,
    DefectClass.SchedulingConstraint: C.SchedulingAndProvisioning,
    DefectClass.ReleaseSizeOverflow: C.ReleaseAndRolloutConfig,
}
