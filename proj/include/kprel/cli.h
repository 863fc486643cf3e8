#ifndef KPREL_CLI_H_
#define KPREL_CLI_H_

#include <ostream>
#include <string>
#include <vector>

namespace kprel {

// Subcommands: ingest, mix, judge, train, calibrate, eval, compare, simulate,
// batch-infer, diff-merge, serve. Returns 0 on success, 1 on a runtime
// failure, 2 on a usage error; failures print one diagnostic line to err.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int run_cli(int argc, char** argv);

}  // namespace kprel

#endif  // KPREL_CLI_H_
