import sys
import threading


class ThreadLocalStdout:
    """
    sys.stdout proxy with an optional per-thread capture buffer.

    Sweep cells running on worker threads log through ptprint. Each worker
    points its thread at its own StringIO before the cell starts and the
    collected block is printed in one piece once the cell finishes, so the
    lines of concurrent cells never interleave. Threads without a buffer
    write straight through to the real stream.
    """

    def __init__(self, real_stdout):
        self.real_stdout = real_stdout
        self.local = threading.local()
        self._saved = None

    def activate(self) -> None:
        self._saved = (sys.stdout, sys.stderr)
        sys.stdout = self
        sys.stderr = self

    def deactivate(self) -> None:
        if self._saved is not None:
            sys.stdout, sys.stderr = self._saved
            self._saved = None

    def set_thread_buffer(self, buffer) -> None:
        self.local.buffer = buffer

    def clear_thread_buffer(self) -> None:
        self.local.buffer = None

    def _target(self):
        return getattr(self.local, "buffer", None) or self.real_stdout

    def write(self, data):
        return self._target().write(data)

    def flush(self):
        self._target().flush()

    def isatty(self) -> bool:
        return False
