"""Module with helper functions for lists"""

from typing import Any, Hashable


def unique_in_order(lst: list[Hashable]) -> list[Hashable]:
    """Returns a list of unique items in the order they appear in the list

    Args:
        lst: list of items

    Returns:
        unique: list of unique items"""

    seen = set()
    unique = []

    for item in lst:
        if item not in seen:
            unique.append(item)
            seen.add(item)

    return unique


def find_duplicates(lst: list[Hashable]) -> list[Hashable]:
    """Returns the items occurring more than once, in order of their first occurrence"""
    return [item for item in unique_in_order(lst) if lst.count(item) > 1]


def get_list_item_indices(li: list[Any], di: dict[str, Any]) -> dict[str, int]:
    """
    Takes a list and a dictionary whose values occur in the list. Returns a dictionary
    with the keys of 'di' and as value the index where the corresponding value is
    found in 'li'.

    Example:
    >>> get_list_item_indices(['third', 'second', 'first'], {'a': 'first', 'b': 'second', 'c': 'third'})
    {'a': 2, 'b': 1, 'c': 0}

    """
    indices: dict[str, int] = {}

    for key in di:
        indices[key] = li.index(di[key])

    return indices
