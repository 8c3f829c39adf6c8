from typing import Optional, Sequence


class TaggerError(Exception):
    """Base exception for tagger related errors"""
    pass


class ShapeMismatchError(TaggerError):
    """Raised when operand shapes do not conform for a primitive"""

    def __init__(self, primitive: str, left: Sequence[int], right: Sequence[int]):
        self.primitive = primitive
        self.left = tuple(left)
        self.right = tuple(right)
        super().__init__(f"{primitive}: incompatible shapes {self.left} and {self.right}")


class NonScalarRootError(TaggerError):
    """Raised when backward is seeded from a non-scalar tensor"""
    pass


class NonFiniteError(TaggerError):
    """Raised when a NaN or Inf value is detected"""
    pass


class CorpusFormatError(TaggerError):
    """Raised when a corpus file cannot be parsed"""

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        self.path = path
        self.line = line
        where = f"{path}:{line}: " if path is not None and line is not None else ""
        super().__init__(f"{where}{message}")


class TagSchemeError(TaggerError):
    """Raised when a tag sequence violates its chunk encoding scheme"""

    def __init__(self, message: str, position: int):
        self.position = position
        super().__init__(f"position {position}: {message}")


class UnknownTagError(TaggerError):
    """Raised when a tag is outside the closed tag set"""
    pass


class EmbeddingFormatError(TaggerError):
    """Raised when a pretrained embedding file is malformed"""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class LookupRangeError(TaggerError):
    """Raised when an embedding or tag id is out of range"""
    pass


class ConfigError(TaggerError):
    """Raised when a config file holds an unknown key or a bad value"""
    pass


class CheckpointError(TaggerError):
    """Raised when a checkpoint cannot be read or does not match"""
    pass


class TrainingDivergedError(TaggerError):
    """Raised when training produces a non-finite loss"""

    def __init__(self, epoch: int, sentence_index: int, loss: float):
        self.epoch = epoch
        self.sentence_index = sentence_index
        self.loss = loss
        super().__init__(
            f"non-finite loss {loss} at epoch {epoch}, sentence {sentence_index}"
        )


class AlignmentError(TaggerError):
    """Raised when gold and predicted corpora are not aligned"""
    pass
