"""
Utilities Package
"""

from .dependency_checker import (
    DEPENDENCIES,
    check_dependencies,
    check_package_installed,
    compare_versions,
    get_installation_command,
    log_dependency_status,
)

__all__ = [
    'DEPENDENCIES',
    'check_dependencies',
    'check_package_installed',
    'compare_versions',
    'get_installation_command',
    'log_dependency_status',
]
