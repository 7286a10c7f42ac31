#include <cstdio>

int main() {
    std::puts("iplab: CLI not wired up yet");
    return 64;
}
