#include <stdio.h>

int main(void) {
    unsigned char buf[64];
    unsigned long h = 0;
    size_t i;
    size_t n = fread(buf, 1, sizeof buf, stdin);
    for (i = 0; i < n; i++) {
        h += buf[i];
        h += h << 10;
        h ^= h >> 6;
        h &= 0xFFFFFFFFUL;
    }
    h += h << 3;
    h ^= h >> 11;
    h += h << 15;
    h &= 0xFFFFFFFFUL;
    if (h == 0x86BDF0E8UL) {
        puts("jenkins unlocked");
    }
    return 0;
}
