import sys

from units import c_to_f


def test_boiling():
    assert c_to_f(100) == 212


def test_freezing():
    assert c_to_f(0) == 32


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
