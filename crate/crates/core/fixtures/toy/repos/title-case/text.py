def capitalize_words(s):
    """Capitalize the first letter of every space-separated word."""
    return s.capitalize()
