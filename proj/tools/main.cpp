#include <iostream>
int main() { std::cout << "collarforge (cli wiring pending)\n"; return 2; }
