#include "deprompt/http_transport.hpp"
#include "deprompt/pipeline.hpp"

int main(int argc, char** argv) {
    deprompt::RunHooks hooks;
    hooks.transport_factory = deprompt::make_http_transport;
    return deprompt::run_main(argc, argv, hooks);
}
