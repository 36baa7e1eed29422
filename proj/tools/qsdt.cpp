#include <cstdio>
int main() { std::puts("qsdt placeholder"); return 0; }
