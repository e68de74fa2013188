"""
Exception hierarchy for hrtfgroup
Every error raised by the services derives from HrtfGroupError so the CLI
can turn it into a one-line message and a nonzero exit code.
"""
from typing import Optional


class HrtfGroupError(Exception):
    """Base class for all domain errors"""


class InvalidArgumentError(HrtfGroupError, ValueError):
    """Non-finite or out-of-range argument"""


class ConfigurationError(HrtfGroupError):
    """Inconsistent configuration (bad band, mismatched normalization, ...)"""


# ============================================================================
# Dataset errors
# ============================================================================

class DatasetError(HrtfGroupError):
    """Problem reading or validating a dataset directory"""

    def __init__(self, message: str, path: Optional[str] = None, subject_id: Optional[str] = None):
        super().__init__(message)
        self.path = path
        self.subject_id = subject_id


class DatasetFileMissingError(DatasetError, FileNotFoundError):
    """A file required by the dataset format does not exist"""


class MalformedDataError(DatasetError):
    """A file exists but its content violates the format"""

    def __init__(self, message: str, path: Optional[str] = None,
                 subject_id: Optional[str] = None, row_index: Optional[int] = None):
        super().__init__(message, path=path, subject_id=subject_id)
        self.row_index = row_index


class IncompleteSubjectError(DatasetError):
    """Subject does not cover the full measurement grid"""


# ============================================================================
# Numerical degeneracies
# ============================================================================

class DegenerateInputError(HrtfGroupError):
    """Input for which the transform is undefined (e.g. all-zero HRIR)"""


class DegenerateParameterError(HrtfGroupError):
    """Anthropometric parameter with zero spread across subjects"""

    def __init__(self, index: int):
        super().__init__(f"Anthropometric parameter p{index + 1} (index {index}) has zero standard deviation")
        self.index = index


class DegenerateRangeError(HrtfGroupError):
    """Min-max statistics with max <= min"""


class NumericalFaultError(HrtfGroupError):
    """Non-finite activation, gradient or parameter update"""

    def __init__(self, message: str, layer_index: Optional[int] = None):
        super().__init__(message)
        self.layer_index = layer_index


# ============================================================================
# Grouping / routing errors
# ============================================================================

class WrongSideError(HrtfGroupError):
    """Direction is not on the side covered by a diffraction-effect mask"""


class PartitionError(HrtfGroupError):
    """Router groups are not a disjoint, exhaustive cover of their domain"""


class RoutingError(HrtfGroupError):
    """Direction could not be dispatched to a group model"""


class DegenerateGroupError(HrtfGroupError):
    """A group ended up with no training data"""

    def __init__(self, label: str):
        super().__init__(f"Group {label} has no training examples after the seen/unseen split")
        self.label = label


# ============================================================================
# Artifact errors
# ============================================================================

class CheckpointError(HrtfGroupError):
    """Missing or unreadable model checkpoint"""

    def __init__(self, message: str, group: Optional[str] = None, path: Optional[str] = None):
        super().__init__(message)
        self.group = group
        self.path = path


class ManifestMismatchError(HrtfGroupError):
    """Model preprocessing manifest does not match the data it is applied to"""
