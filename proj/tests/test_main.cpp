#include <cstdlib>

#include <catch2/catch_amalgamated.hpp>

int main(int argc, char* argv[]) {
    // Expected degenerate-fallback warnings would drown the test output.
    setenv("CAT_LOG_LEVEL", "error", 0);
    return Catch::Session().run(argc, argv);
}
