class Url {
    String home = "http://example.com"; // default site
    String pat = "/* not a comment */";
}
