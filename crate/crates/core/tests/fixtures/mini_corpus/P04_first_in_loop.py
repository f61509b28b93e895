def total(xs):
    s = 0
    for x in xs:
        # add each value
        s += x
    return s
