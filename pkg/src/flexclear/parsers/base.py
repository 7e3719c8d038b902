"""Abstract base class for input parsers."""

from abc import ABC, abstractmethod
from pathlib import Path
from typing import Generic, TypeVar

from flexclear.utils.logging_config import get_logger

logger = get_logger(__name__)

T = TypeVar("T")


class ParseError(Exception):
    """Exception raised when parsing fails."""

    def __init__(self, message: str, line: int | None = None, file_path: Path | None = None):
        """Initialize ParseError.

        Args:
            message: Error message.
            line: Optional 1-based line number where parsing failed.
            file_path: Optional path to the file that failed to parse.
        """
        self.line = line
        self.file_path = file_path
        self.detail = message
        if line is not None:
            message = f"line {line}: {message}"
        if file_path is not None:
            message = f"{file_path}: {message}"
        super().__init__(message)


class CaseStructureError(ParseError):
    """A required table is missing from a case file."""

    def __init__(self, missing: str, file_path: Path | None = None):
        self.missing = missing
        super().__init__(f"missing required table '{missing}'", file_path=file_path)


class BaseParser(ABC, Generic[T]):
    """Abstract base class for all text-format parsers.

    Subclasses must implement:
    - supported_extensions: List of file extensions this parser handles
    - parse_text(): Parse file content into the parser's result type
    """

    @property
    @abstractmethod
    def supported_extensions(self) -> list[str]:
        """Return list of file extensions this parser supports.

        Returns:
            List of extensions like ['.m'].
        """

    @property
    def name(self) -> str:
        """Return parser name for logging."""
        return self.__class__.__name__

    @abstractmethod
    def parse_text(self, text: str) -> T:
        """Parse file content.

        Args:
            text: Full file content.

        Returns:
            Parsed result.

        Raises:
            ParseError: If parsing fails.
        """

    def can_parse(self, file_path: Path) -> bool:
        """Check if this parser can handle the given file by extension."""
        return file_path.suffix.lower() in self.supported_extensions

    def parse(self, file_path: Path) -> T:
        """Read a file and parse its content.

        Args:
            file_path: Path to the file to parse.

        Returns:
            Parsed result.

        Raises:
            ParseError: If parsing fails (re-raised with the file path attached).
            FileNotFoundError: If file doesn't exist.
        """
        if not file_path.exists():
            raise FileNotFoundError(f"File not found: {file_path}")
        text = file_path.read_text(encoding="utf-8", errors="replace")
        try:
            result = self.parse_text(text)
        except CaseStructureError as e:
            raise CaseStructureError(e.missing, file_path=file_path) from e
        except ParseError as e:
            raise ParseError(e.detail, line=e.line, file_path=file_path) from e
        logger.info(f"{self.name} parsed {file_path.name}")
        return result
