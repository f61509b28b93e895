class Doc {
    /** Documented field. */
    int x;

    // plain note
    int y;
}
