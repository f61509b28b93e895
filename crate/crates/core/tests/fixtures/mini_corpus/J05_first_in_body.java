class Loop {
    int sum(int[] xs) {
        int s = 0;
        for (int x : xs) {
            // accumulate
            s += x;
        }
        return s;
    }
}
