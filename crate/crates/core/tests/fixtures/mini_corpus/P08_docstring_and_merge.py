def greet(name):
    """Say hello."""
    # build the
    # greeting text
    msg = "hi " + name
    return msg
