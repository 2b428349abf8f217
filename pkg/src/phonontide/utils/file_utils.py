from pathlib import Path
from typing import Optional


def get_files_by_extension(
    directory: str | Path, file_ext: Optional[str] = None, search_sub_dir: bool = False
) -> list[dict[str, str]]:
    """
    Searches through a directory for files with the specified file extension.

    Args:
      directory (str | Path): Path to the folder (may contain subfolders).
      file_ext (Optional[str]): File extension (with or without dot). All files if None.
      search_sub_dir (bool): Whether to search subdirectories as well. Default is False.

    Returns:
      list[dict[str, str]]: List of dictionaries with 'name' and 'path' keys, sorted by path.
    """

    dir_path = Path(directory)

    if not dir_path.exists() or not dir_path.is_dir():
        raise ValueError(f"Invalid directory: {directory}")

    if file_ext is not None and not file_ext.strip(". "):
        raise ValueError("File extension cannot be empty")

    pattern = "*" if file_ext is None else f"*.{file_ext.lstrip('.').casefold()}"
    search_func = dir_path.rglob if search_sub_dir else dir_path.glob

    return [
        {"name": file.name, "path": str(file)}
        for file in sorted(search_func(pattern))
        if file.is_file()
    ]


def prepare_output_dir(directory: str | Path) -> Path:
    """Creates the output directory (and its parents) if needed and returns it as a Path

    Raises:
        ValueError: when the path exists but is not a directory"""

    dir_path = Path(directory)

    if dir_path.exists() and not dir_path.is_dir():
        raise ValueError(f"The output path '{directory}' exists and is not a directory")

    dir_path.mkdir(parents=True, exist_ok=True)
    return dir_path
