import sys

from text import capitalize_words


def test_every_word():
    assert capitalize_words("hello big world") == "Hello Big World"


def test_single_word():
    assert capitalize_words("rust") == "Rust"


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
