#include <stdio.h>

static int hex_digit(int c) {
    if (c >= '0' && c <= '9') {
        return c - '0';
    }
    if (c >= 'a' && c <= 'f') {
        return c - 'a' + 10;
    }
    return -1;
}

int main(void) {
    unsigned char buf[16];
    unsigned long value = 0;
    size_t i;
    size_t n = fread(buf, 1, sizeof buf, stdin);
    if (n < 8) {
        return 0;
    }
    for (i = 0; i < 8; i++) {
        int d = hex_digit(buf[i]);
        if (d < 0) {
            return 0;
        }
        value = (value << 4) | (unsigned long)d;
    }
    if (value == 0xDEADBEEF) {
        puts("hex unlocked");
    }
    return 0;
}
