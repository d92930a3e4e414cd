"""Named span-model artifacts: download, cache, verify, load.

Four built-in model names ship with the toolkit; their artifacts are fetched
from a configurable repository URL and cached content-addressed under the
cache root. Locally trained artifacts can be registered by path.

Configuration precedence for the cache root and repository URL:
config file, then environment variable, then platform default.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import shutil
import tarfile
import tempfile
import threading
import urllib.error
import urllib.request
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Iterable

from .errors import FetchError, IntegrityError, RegistryError
from .neural import CONFIG_FILE, Device, SpanModel

logger = logging.getLogger(__name__)

ENV_CACHE_DIR = "TOXSPAN_CACHE_DIR"
ENV_REGISTRY_URL = "TOXSPAN_REGISTRY_URL"
ENV_CONFIG_FILE = "TOXSPAN_CONFIG"
ENV_OFFLINE = "TOXSPAN_OFFLINE"

_VERIFIED_MARKER = ".verified"


@dataclass(frozen=True)
class ModelCard:
    name: str
    base_checkpoint: str
    languages: tuple[str, ...]
    reported_span_f1: float | None  # provenance display only, never used in logic
    uri: str | None = None  # None: compose from the configured repository URL
    checksum: str | None = None  # sha256; None means unpinned (verified with a warning)

    def to_dict(self) -> dict:
        data = asdict(self)
        data["languages"] = list(self.languages)
        return data

    @classmethod
    def from_dict(cls, data: dict) -> ModelCard:
        return cls(
            name=data["name"],
            base_checkpoint=data.get("base_checkpoint", ""),
            languages=tuple(data.get("languages", ())),
            reported_span_f1=data.get("reported_span_f1"),
            uri=data.get("uri"),
            checksum=data.get("checksum"),
        )


BUILTIN_CARDS = (
    ModelCard("en-base", "xlnet-base-cased", ("en",), 0.6734),
    ModelCard("en-large", "roberta-large", ("en",), 0.6886),
    ModelCard("multilingual-base", "xlm-roberta-base", ("mul",), 0.6160),
    ModelCard("multilingual-large", "xlm-roberta-large", ("mul",), 0.6338),
)


def _load_config_file() -> dict:
    path = os.environ.get(ENV_CONFIG_FILE)
    candidates = [Path(path)] if path else [Path.home() / ".config" / "toxspan" / "config.json"]
    for candidate in candidates:
        if candidate.is_file():
            try:
                return json.loads(candidate.read_text())
            except (OSError, json.JSONDecodeError) as exc:
                logger.warning("ignoring unreadable config file %s: %s", candidate, exc)
    return {}


def default_cache_dir() -> Path:
    config = _load_config_file()
    if "cache_dir" in config:
        return Path(config["cache_dir"]).expanduser()
    if ENV_CACHE_DIR in os.environ:
        return Path(os.environ[ENV_CACHE_DIR]).expanduser()
    xdg = os.environ.get("XDG_CACHE_HOME")
    root = Path(xdg).expanduser() if xdg else Path.home() / ".cache"
    return root / "toxspan"


def default_registry_url() -> str | None:
    config = _load_config_file()
    if "registry_url" in config:
        return config["registry_url"]
    return os.environ.get(ENV_REGISTRY_URL)


def directory_checksum(artifact_dir: str | Path) -> str:
    """sha256 over relative paths and contents of all files, sorted."""
    artifact_dir = Path(artifact_dir)
    digest = hashlib.sha256()
    for path in sorted(p for p in artifact_dir.rglob("*") if p.is_file()):
        digest.update(path.relative_to(artifact_dir).as_posix().encode("utf-8"))
        digest.update(b"\0")
        digest.update(path.read_bytes())
        digest.update(b"\0")
    return digest.hexdigest()


def file_checksum(path: str | Path) -> str:
    digest = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def make_artifact_archive(artifact_dir: str | Path, tar_path: str | Path) -> str:
    """Package an artifact directory as a tar.gz; returns its sha256."""
    artifact_dir = Path(artifact_dir)
    with tarfile.open(tar_path, "w:gz") as tar:
        for path in sorted(p for p in artifact_dir.rglob("*") if p.is_file()):
            tar.add(path, arcname=path.relative_to(artifact_dir).as_posix())
    return file_checksum(tar_path)


def _http_download(url: str, dest: Path) -> None:
    try:
        with urllib.request.urlopen(url, timeout=60) as resp, dest.open("wb") as out:
            shutil.copyfileobj(resp, out)
    except (urllib.error.URLError, OSError) as exc:
        raise FetchError(f"download failed for {url}: {exc}") from exc


class Registry:
    """Lookup, fetch, verify, and load named span-model artifacts."""

    def __init__(
        self,
        cache_dir: str | Path | None = None,
        *,
        registry_url: str | None = None,
        offline: bool | None = None,
        transport: Callable[[str, Path], None] | None = None,
        device: Device | None = None,
    ):
        self.cache_dir = Path(cache_dir) if cache_dir else default_cache_dir()
        self.registry_url = registry_url if registry_url is not None else default_registry_url()
        if offline is None:
            offline = os.environ.get(ENV_OFFLINE, "") not in ("", "0", "false")
        self.offline = offline
        self.transport = transport or _http_download
        self.device = device
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    # -- cards ------------------------------------------------------------

    def _cards_dir(self) -> Path:
        return self.cache_dir / "cards"

    def _local_cards(self) -> list[ModelCard]:
        cards = []
        cards_dir = self._cards_dir()
        if not cards_dir.is_dir():
            return cards
        for path in sorted(cards_dir.glob("*.json")):
            try:
                cards.append(ModelCard.from_dict(json.loads(path.read_text())))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                logger.warning("skipping corrupt model card %s: %s", path, exc)
        return cards

    def list_models(self) -> list[ModelCard]:
        """Built-in cards plus locally registered artifacts; local wins on name."""
        by_name = {card.name: card for card in BUILTIN_CARDS}
        for card in self._local_cards():
            by_name[card.name] = card
        return list(by_name.values())

    def register_local(
        self,
        name: str,
        artifact_dir: str | Path,
        *,
        base_checkpoint: str = "",
        languages: Iterable[str] = (),
        reported_span_f1: float | None = None,
    ) -> ModelCard:
        """Record a local artifact directory under ``name``, pinned to its
        current content checksum."""
        artifact_dir = Path(artifact_dir).resolve()
        if not (artifact_dir / CONFIG_FILE).exists():
            raise RegistryError(f"{artifact_dir} is not a span-model artifact")
        card = ModelCard(
            name=name,
            base_checkpoint=base_checkpoint,
            languages=tuple(languages),
            reported_span_f1=reported_span_f1,
            uri=str(artifact_dir),
            checksum=directory_checksum(artifact_dir),
        )
        self._cards_dir().mkdir(parents=True, exist_ok=True)
        (self._cards_dir() / f"{name}.json").write_text(json.dumps(card.to_dict(), indent=2))
        return card

    def _card(self, name: str) -> ModelCard:
        for card in self.list_models():
            if card.name == name:
                return card
        available = ", ".join(sorted(c.name for c in self.list_models()))
        raise RegistryError(f"unknown model {name!r}; available models: {available}")

    # -- artifacts ---------------------------------------------------------

    def _lock_for(self, name: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(name, threading.Lock())

    def _artifact_uri(self, card: ModelCard) -> str:
        if card.uri:
            return card.uri
        if not self.registry_url:
            raise FetchError(
                f"model {card.name!r} has no artifact URI and no repository URL is "
                f"configured (set {ENV_REGISTRY_URL} or 'registry_url' in the config file)"
            )
        return f"{self.registry_url.rstrip('/')}/{card.name}.tar.gz"

    def _cache_slot(self, card: ModelCard) -> Path:
        tag = card.checksum[:12] if card.checksum else "unpinned"
        return self.cache_dir / "models" / card.name / tag

    def is_cached(self, name: str) -> bool:
        try:
            card = self._card(name)
        except RegistryError:
            return False
        if card.uri and not card.uri.startswith(("http://", "https://")):
            return Path(card.uri).is_dir()
        return (self._cache_slot(card) / _VERIFIED_MARKER).exists()

    def _fetch(self, card: ModelCard) -> Path:
        slot = self._cache_slot(card)
        if (slot / _VERIFIED_MARKER).exists():
            return slot
        if self.offline:
            raise FetchError(f"model {card.name!r} is not cached and offline mode is on")
        uri = self._artifact_uri(card)
        slot.parent.mkdir(parents=True, exist_ok=True)
        with tempfile.TemporaryDirectory(dir=slot.parent) as tmp:
            tar_path = Path(tmp) / "artifact.tar.gz"
            logger.info("downloading %s from %s", card.name, uri)
            self.transport(uri, tar_path)
            actual = file_checksum(tar_path)
            if card.checksum is None:
                logger.warning(
                    "model %s has no pinned checksum; accepting sha256 %s", card.name, actual
                )
            elif actual != card.checksum:
                raise IntegrityError(
                    f"checksum mismatch for {card.name}: expected {card.checksum}, got {actual}"
                )
            extract_dir = Path(tmp) / "extracted"
            extract_dir.mkdir()
            with tarfile.open(tar_path, "r:gz") as tar:
                tar.extractall(extract_dir, filter="data")
            if slot.exists():
                shutil.rmtree(slot)
            shutil.move(str(extract_dir), str(slot))
        (slot / _VERIFIED_MARKER).touch()
        return slot

    def resolve(self, name: str) -> SpanModel:
        """Load a model by registered name or by artifact-directory path.

        Remote artifacts are downloaded to the cache once and checksum-verified;
        concurrent resolves of the same name are serialized.
        """
        as_path = Path(name)
        if (as_path / CONFIG_FILE).exists():
            return SpanModel.load(as_path, device=self.device)

        card = self._card(name)
        with self._lock_for(name):
            if card.uri and not card.uri.startswith(("http://", "https://")):
                artifact_dir = Path(card.uri)
                if not artifact_dir.is_dir():
                    raise FetchError(f"registered artifact path {artifact_dir} does not exist")
                if card.checksum and directory_checksum(artifact_dir) != card.checksum:
                    raise IntegrityError(
                        f"artifact {artifact_dir} changed since registration "
                        f"(checksum mismatch for {card.name})"
                    )
                return SpanModel.load(artifact_dir, device=self.device)
            slot = self._fetch(card)
            return SpanModel.load(slot, device=self.device)
