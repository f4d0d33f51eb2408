import sys

from stack import Stack


def test_lifo():
    s = Stack()
    s.push(1)
    s.push(2)
    assert s.pop() == 2


def test_len():
    s = Stack()
    s.push(1)
    assert len(s) == 1


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
