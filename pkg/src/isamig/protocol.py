"""Newline-delimited JSON over a child process's stdin/stdout.

One request line, one reply line.  Used for external reasoners,
classifiers and graders; message ``kind`` is ``context``, ``classify`` or
``grade``.
"""

from __future__ import annotations

import json
import shlex
import subprocess
import threading

from isamig.errors import IsaMigError


class ProtocolError(IsaMigError):
    pass


class StdioPeer:
    def __init__(self, argv, timeout: float = 30.0):
        if isinstance(argv, str):
            argv = shlex.split(argv)
        self.argv = list(argv)
        self.timeout = timeout
        self.round_trips = 0
        self._lock = threading.Lock()
        try:
            self.proc = subprocess.Popen(
                self.argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                text=True, encoding="utf-8", bufsize=1,
            )
        except OSError as exc:
            raise ProtocolError(f"cannot start {self.argv[0]}: {exc}") from None

    def request(self, msg: dict) -> dict:
        line = json.dumps(msg, sort_keys=True, separators=(",", ":"))
        with self._lock:
            if self.proc.poll() is not None:
                raise ProtocolError(f"peer exited with {self.proc.returncode}")
            try:
                self.proc.stdin.write(line + "\n")
                self.proc.stdin.flush()
            except (BrokenPipeError, OSError) as exc:
                raise ProtocolError(f"write failed: {exc}") from None
            reply = self._readline()
            self.round_trips += 1
        try:
            doc = json.loads(reply)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"invalid JSON reply: {exc.msg}") from None
        if not isinstance(doc, dict):
            raise ProtocolError("reply is not a JSON object")
        if "error" in doc:
            raise ProtocolError(f"peer error: {doc['error']}")
        return doc

    def _readline(self) -> str:
        box: list[str] = []
        t = threading.Thread(target=lambda: box.append(self.proc.stdout.readline()), daemon=True)
        t.start()
        t.join(self.timeout)
        if t.is_alive():
            self.proc.kill()
            raise ProtocolError(f"no reply within {self.timeout}s")
        if not box or not box[0]:
            raise ProtocolError("peer closed stdout")
        return box[0]

    def close(self) -> None:
        if self.proc.poll() is None:
            try:
                self.proc.stdin.close()
                self.proc.wait(timeout=5)
            except (OSError, subprocess.TimeoutExpired):
                self.proc.kill()
        if self.proc.stdout:
            self.proc.stdout.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
