#include <cstdio>

int main() {
  std::puts("memcap: CLI wiring pending");
  return 0;
}
