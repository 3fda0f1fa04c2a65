"""
Numerical Stack Dependency Checker
Utility to check and report the packages the toolkit needs at runtime
"""

import importlib
import importlib.util
import logging
import sys
from typing import Any, Dict, Optional, Tuple

logger = logging.getLogger(__name__)


# Runtime dependencies defined in requirements.txt
DEPENDENCIES = {
    "numpy": {"min_version": "1.24.0", "import_name": "numpy", "description": "Arrays and linear algebra"},
    "scipy": {"min_version": "1.10.0", "import_name": "scipy", "description": "Stable softmax/logistic/logsumexp"},
    "scikit-learn": {"min_version": "1.3.0", "import_name": "sklearn", "description": "k-means, k-fold splits, NMI"},
    "pandas": {"min_version": "2.0.0", "import_name": "pandas", "description": "CSV tables for logs and reports"},
    "pydantic": {"min_version": "2.0.0", "import_name": "pydantic", "description": "Checkpoint document validation"},
    "python-dotenv": {"min_version": "1.0.0", "import_name": "dotenv", "description": "Environment variable management"},
    "packaging": {"min_version": "23.0", "import_name": "packaging", "description": "Version comparison for this report"},
}


def check_package_installed(package_name: str, import_name: Optional[str] = None) -> Tuple[bool, str]:
    """
    Check if a package is installed and get its version.

    Args:
        package_name: The package name as it appears in pip
        import_name: The name used to import the package (if different from package_name)

    Returns:
        Tuple of (is_installed, version_string)
    """
    if import_name is None:
        import_name = package_name.replace('-', '_')

    try:
        if importlib.util.find_spec(import_name) is None:
            return False, ""
        try:
            module = importlib.import_module(import_name)
        except ImportError:
            # Module exists but can't be imported (broken installation)
            return False, ""
        version = getattr(module, '__version__', None)
        if version is None:
            from importlib.metadata import PackageNotFoundError, version as dist_version
            try:
                version = dist_version(package_name)
            except PackageNotFoundError:
                version = 'unknown'
        return True, version
    except Exception as e:
        logger.debug(f"Error checking package {package_name}: {e}")
        return False, ""


def compare_versions(current_version: str, required_version: str, operator: str = ">=") -> bool:
    """
    Compare version strings.

    Returns:
        True if version requirement is satisfied
    """
    if current_version == "unknown" or not current_version:
        return False

    try:
        from packaging import version
        current = version.parse(current_version)
        required = version.parse(required_version)
    except ImportError:
        logger.debug("packaging library not available, using simple version comparison")
        return _simple_version_compare(current_version, required_version, operator)
    except Exception as e:
        logger.debug(f"Error comparing versions {current_version} {operator} {required_version}: {e}")
        return True

    if operator == ">=":
        return current >= required
    if operator == "<":
        return current < required
    if operator == "==":
        return current == required
    logger.warning(f"Unsupported version operator: {operator}")
    return True


def _simple_version_compare(current: str, required: str, operator: str) -> bool:
    """Numeric component comparison when packaging is unavailable"""
    try:
        current_parts = [int(x) for x in current.split('.') if x.isdigit()]
        required_parts = [int(x) for x in required.split('.') if x.isdigit()]
        max_len = max(len(current_parts), len(required_parts))
        current_parts.extend([0] * (max_len - len(current_parts)))
        required_parts.extend([0] * (max_len - len(required_parts)))
        if operator == ">=":
            return current_parts >= required_parts
        if operator == "<":
            return current_parts < required_parts
        if operator == "==":
            return current_parts == required_parts
        return True
    except Exception:
        return True


def check_dependencies() -> Dict[str, Any]:
    """
    Check if all runtime dependencies are installed and meet version requirements.

    Returns:
        Dictionary with dependency status information
    """
    results = {
        "all_installed": True,
        "missing_packages": [],
        "outdated_packages": [],
        "installed_packages": {},
        "total_packages": len(DEPENDENCIES),
        "installed_count": 0,
    }

    for package_name, requirements in DEPENDENCIES.items():
        import_name = requirements.get("import_name", package_name)
        description = requirements.get("description", "")
        is_installed, version = check_package_installed(package_name, import_name)

        if not is_installed:
            results["missing_packages"].append({
                "package": package_name,
                "import_name": import_name,
                "description": description,
                "min_version": requirements.get("min_version", "latest"),
            })
            results["all_installed"] = False
            continue

        results["installed_count"] += 1
        results["installed_packages"][package_name] = version
        if "min_version" in requirements and not compare_versions(version, requirements["min_version"], ">="):
            results["outdated_packages"].append({
                "package": package_name,
                "current_version": version,
                "min_required": requirements["min_version"],
                "description": description,
            })
            results["all_installed"] = False

    return results


def get_installation_command() -> str:
    return "pip install -r requirements.txt"


def log_dependency_status(log_level: int = logging.INFO) -> Dict[str, Any]:
    """
    Log the current dependency status with detailed information.

    Returns:
        The status dictionary from check_dependencies()
    """
    status = check_dependencies()

    logger.log(log_level, "=== DDCO Dependency Status ===")
    logger.log(log_level, f"Python: {sys.version_info.major}.{sys.version_info.minor}.{sys.version_info.micro}")
    logger.log(log_level, f"Total packages: {status['total_packages']}")
    logger.log(log_level, f"Installed packages: {status['installed_count']}")
    logger.log(log_level, f"All dependencies satisfied: {status['all_installed']}")

    for pkg in status["missing_packages"]:
        min_ver = f" (>={pkg['min_version']})" if pkg.get('min_version') != 'latest' else ""
        logger.log(log_level, f"  missing: {pkg['package']}{min_ver}: {pkg['description']}")
    for pkg in status["outdated_packages"]:
        logger.log(log_level, f"  outdated: {pkg['package']} {pkg['current_version']} "
                              f"(min required: >={pkg['min_required']})")
    for pkg, version in status["installed_packages"].items():
        logger.log(log_level, f"  - {pkg}: {version}")

    if not status["all_installed"]:
        logger.log(log_level, f"To install missing dependencies, run: {get_installation_command()}")
    return status
