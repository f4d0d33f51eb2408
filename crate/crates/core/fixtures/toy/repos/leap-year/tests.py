import sys

from calendar_utils import is_leap


def test_century_400():
    assert is_leap(2000)


def test_plain():
    assert is_leap(2024) and not is_leap(2023) and not is_leap(1900)


if __name__ == "__main__":
    name = sys.argv[1]
    fn = globals().get(name)
    if not name.startswith("test_") or fn is None:
        print("unknown test", name)
        sys.exit(2)
    try:
        fn()
    except AssertionError as e:
        print("FAIL", name, e)
        sys.exit(1)
    print("ok", name)
