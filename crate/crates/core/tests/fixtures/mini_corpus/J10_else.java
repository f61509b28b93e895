class Branch {
    void pick(boolean c) {
        if (c) {
            left();
        } else {
            // fallback path
            right();
        }
    }
}
