"""Method registry: loads comparison-method definitions from YAML."""

from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import yaml

from src.builder import Prescription
from src.errors import ConfigError

EXACT_LABEL = "Exact"


class MethodRegistry:
    """Manages method configurations and turns them into prescriptions."""

    def __init__(self, config_path: Union[str, Path]):
        self.config_path = Path(config_path)
        self.config = self._load_config()

    def _load_config(self) -> Dict[str, Any]:
        """Load YAML configuration file."""
        if not self.config_path.exists():
            raise ConfigError(f"Method config not found: {self.config_path}")
        with open(self.config_path, "r", encoding="utf-8") as f:
            return yaml.safe_load(f) or {}

    def list_methods(self) -> List[Dict[str, Any]]:
        """Return list of all configured methods."""
        return list(self.config.get("methods", []))

    def get_method_by_name(self, name: str) -> Optional[Dict[str, Any]]:
        for method in self.list_methods():
            if method.get("name") == name:
                return method
        return None

    def get_methods_by_names(self, names: List[str]) -> List[Dict[str, Any]]:
        """Resolve names; "all" selects every method. Unknown names raise ConfigError."""
        if "all" in names:
            return self.list_methods()
        methods = []
        for name in names:
            method = self.get_method_by_name(name)
            if method is None:
                raise ConfigError(f"Unknown method: {name!r}")
            methods.append(method)
        return methods

    def ensemble_methods(self) -> List[str]:
        return [m["name"] for m in self.list_methods() if m.get("ensemble")]

    def to_prescription(
        self,
        method: Dict[str, Any],
        cluster_width: Optional[float] = None,
        secular_cutoff: Optional[float] = None,
    ) -> Optional[Prescription]:
        """Prescription for `method`; None for the exact benchmark."""
        if method.get("tag") == EXACT_LABEL:
            return None
        if method.get("needs_cluster_width") and cluster_width is None:
            raise ConfigError(f"{method['name']} needs a cluster_width")
        return Prescription(
            tag=method["tag"],
            repaired=bool(method.get("repair", False)),
            cluster_width=cluster_width if method.get("needs_cluster_width") else None,
            secular_cutoff=secular_cutoff,
        )

    def resolve(
        self,
        name: str,
        cluster_width: Optional[float] = None,
        secular_cutoff: Optional[float] = None,
    ) -> Optional[Prescription]:
        """Prescription for the method called `name`; None for the exact benchmark."""
        method = self.get_method_by_name(name)
        if method is None:
            raise ConfigError(f"Unknown method: {name!r}")
        return self.to_prescription(method, cluster_width=cluster_width, secular_cutoff=secular_cutoff)
