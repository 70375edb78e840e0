#include <stdio.h>

int main(void) {
    unsigned char buf[32];
    size_t n = fread(buf, 1, sizeof buf, stdin);
    if (n < 6) {
        return 0;
    }
    if (buf[2] == 0) {
        if (buf[3] == 0x1f && buf[4] == 0xff) {
            puts("framed");
        }
    }
    return 0;
}
