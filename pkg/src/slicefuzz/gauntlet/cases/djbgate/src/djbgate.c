#include <stdio.h>

int main(void) {
    unsigned char buf[32];
    unsigned long h = 5381;
    size_t i;
    size_t n = fread(buf, 1, sizeof buf, stdin);
    for (i = 0; i < n; i++) {
        h = (h * 33 + buf[i]) & 0xFFFFFFFFUL;
    }
    if (h == 0xAF8B2995UL) {
        puts("door moves");
    }
    return 0;
}
