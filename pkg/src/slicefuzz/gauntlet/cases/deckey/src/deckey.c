#include <stdio.h>

int main(void) {
    unsigned char buf[16];
    long value = 0;
    size_t i;
    size_t n = fread(buf, 1, sizeof buf, stdin);
    for (i = 0; i < n; i++) {
        if (buf[i] < '0' || buf[i] > '9') {
            break;
        }
        value = value * 10 + (buf[i] - '0');
    }
    if (value == 1337421) {
        puts("dec unlocked");
    }
    return 0;
}
