def save(db):
    db.commit()
    # committed
