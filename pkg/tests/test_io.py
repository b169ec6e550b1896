# Copyright (c) 2025 CoReason, Inc.
#
# This software is proprietary and dual-licensed.
# Licensed under the Prosperity Public License 3.0 (the "License").
# A copy of the license is available at https://prosperitylicense.com/versions/3.0.0
# For details, see the LICENSE file.
# Commercial use beyond a 30-day trial requires a separate license.
#
# Source Code: https://github.com/CoReason-AI/texflow

from pathlib import Path

import pytest

from texflow.exceptions import ArtifactIOError
from texflow.utils import io as artifact_io
from texflow.utils.io import read_bytes, read_text, write_bytes, write_text


def test_write_is_atomic_and_creates_parents(tmp_path: Path) -> None:
    target = write_text(tmp_path / "a" / "b" / "report.json", "{}")
    assert target.read_text() == "{}"
    assert not (target.parent / "report.json.tmp").exists()
    write_bytes(target, b"[1]")
    assert read_text(target) == "[1]"


def test_missing_file(tmp_path: Path) -> None:
    with pytest.raises(ArtifactIOError, match="not found"):
        read_bytes(tmp_path / "nope.bin")


def test_invalid_utf8_text(tmp_path: Path) -> None:
    target = tmp_path / "config.json"
    target.write_bytes(b"\xc3\x28")
    with pytest.raises(ArtifactIOError, match="not valid UTF-8"):
        read_text(target)


def test_transient_read_errors_are_retried(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> None:
    target = tmp_path / "data.bin"
    target.write_bytes(b"payload")
    calls = {"n": 0}
    original = Path.read_bytes

    def flaky(self: Path) -> bytes:
        calls["n"] += 1
        if calls["n"] < 3:
            raise OSError("busy")
        return original(self)

    monkeypatch.setattr(Path, "read_bytes", flaky)
    assert read_bytes(target) == b"payload"
    assert calls["n"] == 3


def test_persistent_write_errors_surface(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> None:
    calls = {"n": 0}

    def broken(src: object, dst: object) -> None:
        calls["n"] += 1
        raise OSError("read-only filesystem")

    monkeypatch.setattr(artifact_io.os, "replace", broken)
    with pytest.raises(ArtifactIOError, match="Cannot write"):
        write_bytes(tmp_path / "out.bin", b"x")
    assert calls["n"] == 3


def test_retry_policy_follows_settings(monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.setenv("TEXFLOW_RETRY_STOP_AFTER_ATTEMPT", "5")
    retrying = artifact_io.io_retrying()
    assert retrying.stop.max_attempt_number == 5  # type: ignore[attr-defined]
