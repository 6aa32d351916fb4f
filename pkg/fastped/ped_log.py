from pathlib import Path
import logging

LOG_FORMAT = "%(asctime)s:%(levelname)s:%(name)s: %(message)s"


def init_ped_logger(log_path: Path | None = None, verbose: bool = False) -> None:
    """Configure the root logger for fastped

    Log records always go to stderr; if a path is given they are also written
    to that file (overwritten each session).

    Parameters
    ----------
    log_path: Path | None
        Optional log file
    verbose: bool
        Emit debug records as well
    """
    handlers: list[logging.Handler] = [logging.StreamHandler()]
    if log_path is not None:
        handlers.append(logging.FileHandler(log_path, mode="w", encoding="utf-8"))
    logging.basicConfig(
        format=LOG_FORMAT,
        level=logging.DEBUG if verbose else logging.INFO,
        handlers=handlers,
        force=True,
    )


def ped_debug(module: str, message: str) -> None:
    logging.getLogger(module).debug(message)


def ped_info(module: str, message: str) -> None:
    logging.getLogger(module).info(message)


def ped_warn(module: str, message: str) -> None:
    logging.getLogger(module).warning(message)


def ped_error(module: str, message: str) -> None:
    logging.getLogger(module).error(message)
