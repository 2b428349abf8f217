"""Module with helper functions for dictionaries"""

from typing import Any, Iterable


def find_missing_keys(dict_to_check: dict[str, Any], required_keys: Iterable[str]) -> list[str]:
    """Returns the required keys that are not present, in the order of required_keys.
    Returns an empty list if all keys are present

    Args:
        dict_to_check: dictionary to check
        required_keys: the required keys"""

    return [key for key in required_keys if key not in dict_to_check]


def find_unknown_keys(dict_to_check: dict[str, Any], allowed_keys: Iterable[str]) -> list[str]:
    """Returns the keys of dict_to_check that are not allowed, in insertion order

    Args:
        dict_to_check: dictionary to check
        allowed_keys: all keys that may be present"""

    allowed = set(allowed_keys)
    return [key for key in dict_to_check if key not in allowed]
