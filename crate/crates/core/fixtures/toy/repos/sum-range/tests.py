import sys

from series import sum_to


def test_sum_to():
    assert sum_to(4) == 10, sum_to(4)


def test_sum_zero():
    assert sum_to(0) == 0


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
