// Reference harness for tests. Speaks the marker protocol on stdout.
//
//   fixture_harness [--list] [--noise N] [--seed S] SPEC...
//
// SPEC is `suite::name` optionally followed by `@opt,opt,...`:
//   sleep_ms=X, sleep_us=X   sleep between BEGIN and END
//   busy_ms=X                spin between BEGIN and END
//   status=pass|fail|skip    END status (default pass)
//   crash                    exit with code 3 after BEGIN
//   hang                     never print END
//   linger                   sleep forever after END
//   no_begin                 print only END
//   wrong_id                 BEGIN names another test
// With --noise N, N random non-marker lines are scattered around every
// marker line.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <random>
#include <string>
#include <thread>
#include <vector>

namespace {

struct Spec {
  std::string id;
  double sleep_us = 0;
  double busy_us = 0;
  std::string status = "PASS";
  bool crash = false;
  bool hang = false;
  bool linger = false;
  bool no_begin = false;
  bool wrong_id = false;
};

Spec parse_spec(const std::string& text) {
  Spec spec;
  auto at = text.find('@');
  spec.id = text.substr(0, at);
  if (at == std::string::npos) return spec;
  std::string opts = text.substr(at + 1);
  std::size_t pos = 0;
  while (pos <= opts.size()) {
    auto comma = opts.find(',', pos);
    std::string opt = opts.substr(pos, comma == std::string::npos ? std::string::npos
                                                                  : comma - pos);
    pos = comma == std::string::npos ? opts.size() + 1 : comma + 1;
    auto eq = opt.find('=');
    std::string key = opt.substr(0, eq);
    std::string value = eq == std::string::npos ? "" : opt.substr(eq + 1);
    if (key == "sleep_ms") spec.sleep_us = std::atof(value.c_str()) * 1000.0;
    else if (key == "sleep_us") spec.sleep_us = std::atof(value.c_str());
    else if (key == "busy_ms") spec.busy_us = std::atof(value.c_str()) * 1000.0;
    else if (key == "status") {
      for (auto& c : value) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
      spec.status = value;
    }
    else if (key == "crash") spec.crash = true;
    else if (key == "hang") spec.hang = true;
    else if (key == "linger") spec.linger = true;
    else if (key == "no_begin") spec.no_begin = true;
    else if (key == "wrong_id") spec.wrong_id = true;
  }
  return spec;
}

class Noise {
 public:
  Noise(int per_line, unsigned seed) : per_line_(per_line), rng_(seed) {}

  void emit() {
    for (int i = 0; i < per_line_; ++i) {
      std::string line = make_line();
      std::fputs(line.c_str(), stdout);
      std::fputc('\n', stdout);
    }
    std::fflush(stdout);
  }

 private:
  std::string make_line() {
    static const char* near_misses[] = {
        "#MANAI:TEST fake::one",     "##MANAI TEST fake::two",
        "##manai:BEGIN fake::three", " ##MANAI:END fake::four PASS",
        "MANAI:TEST fake::five",     "## MANAI:TEST fake::six",
        "[build] ##MANAI:TEST x::y", "\t##MANAI:BEGIN fake::seven",
        "##MANAI;END fake::eight FAIL", "##MAN",
    };
    std::uniform_int_distribution<int> kind(0, 9);
    switch (kind(rng_)) {
      case 0:
        return near_misses[std::uniform_int_distribution<int>(0, 9)(rng_)];
      case 1:
        return "";
      case 2:
        return std::string(std::uniform_int_distribution<int>(100, 5000)(rng_), 'x');
      default: {
        std::string line;
        const int length = std::uniform_int_distribution<int>(1, 120)(rng_);
        std::uniform_int_distribution<int> ch(32, 126);
        for (int i = 0; i < length; ++i) line += static_cast<char>(ch(rng_));
        if (line.rfind("##MANAI:", 0) == 0) line[0] = '_';
        return line;
      }
    }
  }

  int per_line_;
  std::mt19937 rng_;
};

Noise* noise = nullptr;

void marker(const std::string& text) {
  if (noise) noise->emit();
  std::fputs(text.c_str(), stdout);
  std::fputc('\n', stdout);
  std::fflush(stdout);
  if (noise) noise->emit();
}

[[noreturn]] void sleep_forever() {
  for (;;) std::this_thread::sleep_for(std::chrono::hours(1));
}

void run(const Spec& spec) {
  using clock = std::chrono::steady_clock;
  if (!spec.no_begin) {
    marker("##MANAI:BEGIN " + (spec.wrong_id ? std::string("other::test") : spec.id));
  }
  if (spec.sleep_us > 0) {
    std::this_thread::sleep_for(std::chrono::microseconds(static_cast<long>(spec.sleep_us)));
  }
  if (spec.busy_us > 0) {
    const auto until = clock::now() + std::chrono::microseconds(static_cast<long>(spec.busy_us));
    volatile unsigned long sink = 0;
    while (clock::now() < until) sink = sink + 1;
  }
  if (spec.crash) {
    std::fprintf(stderr, "fixture: crashing in %s\n", spec.id.c_str());
    std::_Exit(3);
  }
  if (spec.hang) sleep_forever();
  marker("##MANAI:END " + spec.id + " " + spec.status);
  if (spec.linger) sleep_forever();
}

}  // namespace

int main(int argc, char** argv) {
  bool list = false;
  int noise_lines = 0;
  unsigned seed = 1;
  std::vector<Spec> specs;
  for (int i = 1; i < argc; ++i) {
    std::string arg = argv[i];
    if (arg == "--list") list = true;
    else if (arg == "--noise" && i + 1 < argc) noise_lines = std::atoi(argv[++i]);
    else if (arg == "--seed" && i + 1 < argc) seed = static_cast<unsigned>(std::atol(argv[++i]));
    else specs.push_back(parse_spec(arg));
  }
  Noise generator(noise_lines, seed);
  if (noise_lines > 0) noise = &generator;

  if (list) {
    for (const auto& spec : specs) marker("##MANAI:TEST " + spec.id);
    return 0;
  }
  const char* filter = std::getenv("MANAI_FILTER");
  for (const auto& spec : specs) {
    if (filter && spec.id != filter) continue;
    run(spec);
  }
  return 0;
}
