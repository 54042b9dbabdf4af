class FormatError(ValueError):
    """Raised for malformed input; carries the 1-based line number when known."""

    def __init__(self, message: str, line: int = None, source: str = None):
        self.line = line
        self.source = source
        where = ''
        if source is not None:
            where += f' in {source}'
        if line is not None:
            where += f' @ line {line}'
        super().__init__(message + where)
