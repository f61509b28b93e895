class Init {
    void run() {
        setup();

        // start the engine
        engine.start();
    }
}
