total = 0  # running total
