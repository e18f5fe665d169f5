#include "ahmi/cli_app.hpp"

int main(int argc, char** argv) {
    return ahmi::cli::run(argc, argv);
}
