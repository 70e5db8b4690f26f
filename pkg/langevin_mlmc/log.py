"""
Shared console for progress and diagnostic output.

Library modules call debug/info/warning; nothing is printed unless the
command line (or a caller) enabled verbosity with set_verbose().
"""

from rich.console import Console

console = Console(stderr=True)

_verbose = False


def set_verbose(flag: bool) -> None:
    global _verbose
    _verbose = bool(flag)


def debug(message: str) -> None:
    if _verbose:
        console.log(f"[dim]{message}[/dim]")


def info(message: str) -> None:
    if _verbose:
        console.log(message)


def warning(message: str) -> None:
    # Warnings are always shown.
    console.log(f"[yellow]⚠️ {message}[/yellow]")
