import os
from typing import Generic, List, TypeVar

T = TypeVar("T")


class BaseRepository(Generic[T]):
    """File-backed store: one item per path, items addressed by filename stem inside a directory."""

    extension: str = ""

    def save(self, item: T, path: str) -> str:
        directory = os.path.dirname(os.path.abspath(path))
        os.makedirs(directory, exist_ok=True)
        with open(path, "wb") as f:
            f.write(self.encode(item))
        return path

    def load(self, path: str) -> T:
        with open(path, "rb") as f:
            return self.decode(f.read(), source=path)

    def list_stems(self, directory: str) -> List[str]:
        if not os.path.isdir(directory):
            raise FileNotFoundError(f"Directory not found: {directory}")
        stems = [name[: -len(self.extension)] for name in os.listdir(directory) if name.endswith(self.extension)]
        return sorted(stems)

    def path_for(self, directory: str, stem: str) -> str:
        return os.path.join(directory, f"{stem}{self.extension}")

    def encode(self, item: T) -> bytes:
        raise NotImplementedError("The 'encode' method must be implemented by the child class.")

    def decode(self, payload: bytes, source: str = "<bytes>") -> T:
        raise NotImplementedError("The 'decode' method must be implemented by the child class.")
