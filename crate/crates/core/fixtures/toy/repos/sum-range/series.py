def sum_to(n):
    """Sum of the integers 1..n inclusive."""
    return sum(range(n))
